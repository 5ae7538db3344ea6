//! Training and inference passes.
//!
//! Training: each example gets a zero-shot attempt; every failed attempt is
//! written to the mistake store and, while iterations remain, the student
//! retries with the retrieved mistakes and a guideline. Afterwards a seeded
//! subset of the store is annotated with cached guidelines.
//!
//! Inference: one guided attempt per example against a frozen store.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assistant::{annotate_entries, generate_feedback, generate_guidance, FeedbackRequest};
use crate::backends::{Backend, GenParams};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::memory::{Polarity, Store};
use crate::scalar::Scalar;
use crate::student::{
    self, attempt, build_prompt, collect_guidelines, PromptMode, PromptParts, Retriever,
};
use crate::types::{AssistState, Attempt, RewardRecord, TaskExample};

const EMPTY_RESPONSE: &str = "(empty response)";

/// The two models plus the embedder shared by every pass.
#[derive(Clone, Copy)]
pub struct Agents<'a, F: Scalar = f64> {
    pub student: &'a dyn Backend,
    pub assistant: &'a dyn Backend,
    pub embedder: &'a dyn EmbeddingProvider<F>,
    pub params: &'a GenParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub completed_ids: Vec<String>,
    pub store_path: PathBuf,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct_store_path: Option<PathBuf>,
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpointing {
    pub path: PathBuf,
    pub store_path: PathBuf,
    pub correct_store_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_iters: usize,
    pub feedback_fraction: f64,
    pub seed: u64,
    /// Retrieval used when building refinement prompts.
    pub k: usize,
    pub theta: f64,
    pub checkpoint: Option<Checkpointing>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iters: 2,
            feedback_fraction: 1.0,
            seed: 0,
            k: 3,
            theta: 0.9,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainOutcome {
    pub rewards: Vec<RewardRecord>,
    /// Store indices chosen to receive cached guidelines.
    pub feedback_indices: Vec<usize>,
}

/// How many of `n` entries receive feedback, and which, for a given seed.
pub fn select_for_feedback(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let count = if fraction >= 1.0 {
        n
    } else {
        ((fraction * n as f64).round() as usize).clamp(1, n)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, count).into_vec();
    picked.sort_unstable();
    picked
}

pub fn training_pass<F: Scalar>(
    train: &[TaskExample],
    agents: &Agents<'_, F>,
    store: &mut Store<F>,
    mut correct: Option<&mut Store<F>>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if cfg.max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    if !(cfg.feedback_fraction > 0.0 && cfg.feedback_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "feedback_fraction {} not in (0, 1]",
            cfg.feedback_fraction
        )));
    }
    if store.polarity() != Polarity::Mistakes {
        return Err(Error::PolarityMismatch {
            expected: "mistakes",
            actual: store.polarity().name(),
        });
    }

    let mut completed: BTreeSet<String> = BTreeSet::new();
    if let Some(cp) = &cfg.checkpoint {
        if cp.path.exists() {
            let saved = Checkpoint::read(&cp.path)?;
            if saved.seed != cfg.seed {
                return Err(Error::Config(format!(
                    "checkpoint seed {} differs from run seed {}",
                    saved.seed, cfg.seed
                )));
            }
            completed.extend(saved.completed_ids);
        }
    }

    let mut outcome = TrainOutcome::default();
    let theta = F::from_f64_lossy(cfg.theta);
    for ex in train {
        if completed.contains(ex.id()) {
            continue;
        }
        let records = train_one(ex, agents, store, correct.as_deref_mut(), cfg, theta)?;
        outcome.rewards.extend(records);
        if let Some(cp) = &cfg.checkpoint {
            completed.insert(ex.id().to_string());
            store.save(&cp.store_path)?;
            if let (Some(path), Some(c)) = (&cp.correct_store_path, correct.as_deref()) {
                c.save(path)?;
            }
            Checkpoint {
                completed_ids: completed.iter().cloned().collect(),
                store_path: cp.store_path.clone(),
                seed: cfg.seed,
                correct_store_path: cp.correct_store_path.clone(),
            }
            .write(&cp.path)?;
        }
    }

    outcome.feedback_indices = select_for_feedback(store.len(), cfg.feedback_fraction, cfg.seed);
    let annotated = annotate_entries(
        store,
        &outcome.feedback_indices,
        agents.assistant,
        agents.params,
    );
    if let Some(cp) = &cfg.checkpoint {
        store.save(&cp.store_path)?;
    }
    annotated?;
    Ok(outcome)
}

fn train_one<F: Scalar>(
    ex: &TaskExample,
    agents: &Agents<'_, F>,
    store: &mut Store<F>,
    mut correct: Option<&mut Store<F>>,
    cfg: &TrainConfig,
    theta: F,
) -> Result<Vec<RewardRecord>> {
    let query = ex.query_block();
    let target = ex.target_text();
    let mut records = Vec::new();
    let mut prompt = build_prompt(ex, PromptMode::ZeroShot, PromptParts::default())?;
    for iteration in 0..cfg.max_iters {
        let att = attempt(ex, &prompt, agents.student, agents.params, iteration)?;
        records.push(RewardRecord::from(&att));
        if att.passed {
            if iteration == 0 {
                if let Some(c) = correct.as_deref_mut() {
                    c.insert_correct(agents.embedder, &query, &target, ex.task())?;
                }
            }
            break;
        }
        let wrong = if att.response.trim().is_empty() {
            EMPTY_RESPONSE
        } else {
            att.response.as_str()
        };
        store.insert_mistake(agents.embedder, &query, &target, wrong, ex.task())?;
        if iteration + 1 == cfg.max_iters {
            break;
        }

        // Own entry is eligible context: the retry sees its earlier answers.
        let context = store.retrieve(agents.embedder, &query, cfg.k, theta)?;
        let own_cached = store
            .get(&query)
            .and_then(|e| e.guideline.as_ref())
            .is_some();
        let mut guidelines = Vec::new();
        if !own_cached {
            let req = FeedbackRequest {
                state: AssistState {
                    query: query.clone(),
                    response: wrong.to_string(),
                    context: context.clone(),
                },
                target: Some(target.clone()),
            };
            guidelines.push(generate_feedback(&req, agents.assistant, agents.params)?.guideline);
        }
        guidelines.extend(collect_guidelines(&context));
        let parts = PromptParts {
            context: Some(&context),
            guidelines: &guidelines,
            ..Default::default()
        };
        prompt = build_prompt(ex, PromptMode::Salam, parts)?;
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub mode: PromptMode,
    pub k: usize,
    pub theta: f64,
    /// Record backend failures as failed attempts instead of aborting.
    pub tolerate_errors: bool,
    /// Ask the assistant for a fresh guideline per query instead of using
    /// cached ones (salam mode only).
    pub live_feedback: bool,
}

impl InferenceConfig {
    pub fn new(mode: PromptMode) -> Self {
        Self {
            mode,
            k: 3,
            theta: 0.9,
            tolerate_errors: false,
            live_feedback: false,
        }
    }
}

fn infer_one<F: Scalar>(
    ex: &TaskExample,
    agents: &Agents<'_, F>,
    retriever: Option<&Retriever<'_, F>>,
    cfg: &InferenceConfig,
) -> Result<Attempt> {
    if cfg.mode == PromptMode::Salam && cfg.live_feedback {
        let r = retriever.ok_or(Error::MissingContext("salam"))?;
        let context = r.context(&ex.query_block())?;
        let state = AssistState {
            query: ex.query_block(),
            response: String::new(),
            context,
        };
        let note = generate_guidance(&state, agents.assistant, agents.params)?;
        return student::answer(
            ex,
            cfg.mode,
            Some(r),
            Some(&[note.guideline]),
            agents.student,
            agents.params,
        );
    }
    student::answer(ex, cfg.mode, retriever, None, agents.student, agents.params)
}

/// One attempt per test example; the store is only read. Runs on the
/// current rayon pool.
pub fn inference_pass<F: Scalar>(
    test: &[TaskExample],
    agents: &Agents<'_, F>,
    store: Option<&Store<F>>,
    cfg: &InferenceConfig,
) -> Result<Vec<Attempt>> {
    if cfg.mode.is_pseudo() {
        return Err(Error::Config(format!(
            "{} is evaluated by the pseudo-mistake protocol",
            cfg.mode
        )));
    }
    let retriever = match (cfg.mode.retrieves_from(), store) {
        (None, _) => None,
        (Some(_), None) => return Err(Error::MissingContext(cfg.mode.name())),
        (Some(_), Some(store)) => Some(Retriever {
            store,
            embedder: agents.embedder,
            k: cfg.k,
            theta: F::from_f64_lossy(cfg.theta),
        }),
    };
    test.par_iter()
        .map(|ex| match infer_one(ex, agents, retriever.as_ref(), cfg) {
            Ok(a) => Ok(a),
            Err(e) if cfg.tolerate_errors && !matches!(e, Error::PolarityMismatch { .. }) => {
                log::warn!("example {} failed: {e}", ex.id());
                Ok(Attempt {
                    example_id: ex.id().to_string(),
                    response: String::new(),
                    passed: false,
                    iteration: 0,
                })
            }
            Err(e) => Err(e),
        })
        .collect()
}

/// Mean reward, or `None` for an empty set.
pub fn accuracy(attempts: &[Attempt]) -> Option<f64> {
    if attempts.is_empty() {
        return None;
    }
    Some(attempts.iter().filter(|a| a.passed).count() as f64 / attempts.len() as f64)
}
