//! Baseline matrix, retrieval sweeps, pseudo-mistake and out-of-domain
//! protocols.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::harness::dataset::{split, task_order, Split, SplitSpec};
use crate::harness::report::{ConfigSnapshot, CurvePoint, EvalReport};
use crate::memory::{Polarity, Store};
use crate::orchestrator::{
    inference_pass, training_pass, Agents, InferenceConfig, TrainConfig, TrainOutcome,
};
use crate::scalar::Scalar;
use crate::student::{attempt, build_prompt, PromptMode, PromptParts, PSEUDO_DEMONSTRATIONS};
use crate::types::{option_label, Attempt, ContextItem, TaskExample};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Retrieval used at evaluation time.
    pub k: usize,
    pub theta: f64,
    /// Seeds pseudo-label sampling.
    pub seed: u64,
    pub train: TrainConfig,
    pub tolerate_errors: bool,
    pub live_feedback: bool,
    /// Task descriptions opening pseudo few-shot prompts.
    pub preambles: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k: 3,
            theta: 0.9,
            seed: 0,
            train: TrainConfig::default(),
            tolerate_errors: false,
            live_feedback: false,
            preambles: BTreeMap::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn snapshot<F: Scalar>(&self, agents: &Agents<'_, F>, mode: PromptMode) -> ConfigSnapshot {
        let mut c = ConfigSnapshot::new();
        c.insert("mode".into(), json!(mode.name()));
        c.insert("k".into(), json!(self.k));
        c.insert("theta".into(), json!(self.theta));
        c.insert("seed".into(), json!(self.seed));
        c.insert("max_iters".into(), json!(self.train.max_iters));
        c.insert(
            "feedback_fraction".into(),
            json!(self.train.feedback_fraction),
        );
        c.insert("train_seed".into(), json!(self.train.seed));
        c.insert("student_backend".into(), json!(agents.student.id()));
        c.insert("assistant_backend".into(), json!(agents.assistant.id()));
        c.insert("embedder".into(), json!(agents.embedder.id()));
        c.insert("live_feedback".into(), json!(self.live_feedback));
        c
    }
}

/// Mistake store (annotated) and correct-answer store built from one
/// training pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Memories<F: Scalar = f64> {
    pub mistakes: Store<F>,
    pub correct: Store<F>,
}

impl<F: Scalar> Memories<F> {
    pub fn for_mode(&self, mode: PromptMode) -> Option<&Store<F>> {
        match mode.retrieves_from()? {
            Polarity::Mistakes => Some(&self.mistakes),
            Polarity::Correct => Some(&self.correct),
        }
    }
}

pub fn build_memories<F: Scalar>(
    train: &[TaskExample],
    agents: &Agents<'_, F>,
    cfg: &TrainConfig,
) -> Result<(Memories<F>, TrainOutcome)> {
    let dim = agents.embedder.dim();
    let mut mistakes = Store::new(Polarity::Mistakes, dim);
    let mut correct = Store::new(Polarity::Correct, dim);
    let outcome = training_pass(train, agents, &mut mistakes, Some(&mut correct), cfg)?;
    Ok((Memories { mistakes, correct }, outcome))
}

/// Uniform sampling of a wrong option label, seeded once per run.
pub struct PseudoSampler {
    rng: ChaCha8Rng,
}

impl PseudoSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, example: &TaskExample) -> char {
        let n = example.options().len();
        let gold = example.answer_index();
        let pick = self.rng.gen_range(0..n - 1);
        option_label(if pick >= gold { pick + 1 } else { pick })
    }

    fn demonstrations(
        &mut self,
        example: &TaskExample,
        pool: &[&TaskExample],
    ) -> Result<Vec<ContextItem>> {
        let others: Vec<&TaskExample> = pool
            .iter()
            .copied()
            .filter(|e| e.id() != example.id())
            .collect();
        if others.len() < PSEUDO_DEMONSTRATIONS {
            return Err(Error::TinyTask {
                task: example.task().to_string(),
                count: pool.len(),
                required: PSEUDO_DEMONSTRATIONS + 1,
            });
        }
        let mut picks =
            rand::seq::index::sample(&mut self.rng, others.len(), PSEUDO_DEMONSTRATIONS).into_vec();
        picks.sort_unstable();
        Ok(picks
            .into_iter()
            .map(|i| {
                let d = others[i];
                ContextItem {
                    query: d.query_block(),
                    target: d.target_text(),
                    wrong_answers: vec![format!("({})", self.sample(d))],
                    guideline: None,
                    similarity: 0.0,
                }
            })
            .collect())
    }
}

/// Builds every pseudo-mistake prompt up front (sampling is serial and
/// seeded) and then queries the student.
fn pseudo_attempts<F: Scalar>(
    examples: &[TaskExample],
    mode: PromptMode,
    seed: u64,
    agents: &Agents<'_, F>,
    cfg: &ExperimentConfig,
) -> Result<Vec<Attempt>> {
    let mut sampler = PseudoSampler::new(seed);
    let mut prompts = Vec::with_capacity(examples.len());
    for ex in examples {
        let label = sampler.sample(ex);
        let prompt = match mode {
            PromptMode::PseudoZero => build_prompt(
                ex,
                mode,
                PromptParts {
                    pseudo_wrong: Some(label),
                    ..Default::default()
                },
            )?,
            PromptMode::PseudoFewshot => {
                let pool: Vec<&TaskExample> =
                    examples.iter().filter(|e| e.task() == ex.task()).collect();
                let demos = sampler.demonstrations(ex, &pool)?;
                let parts = PromptParts {
                    context: Some(&demos),
                    pseudo_wrong: Some(label),
                    preamble: cfg.preambles.get(ex.task()).map(String::as_str),
                    ..Default::default()
                };
                build_prompt(ex, mode, parts)?
            }
            other => {
                return Err(Error::Config(format!(
                    "{other} is not a pseudo-mistake mode"
                )))
            }
        };
        prompts.push(prompt);
    }
    examples
        .par_iter()
        .zip(prompts.par_iter())
        .map(
            |(ex, prompt)| match attempt(ex, prompt, agents.student, agents.params, 0) {
                Err(e) if cfg.tolerate_errors => {
                    log::warn!("example {} failed: {e}", ex.id());
                    Ok(Attempt {
                        example_id: ex.id().to_string(),
                        response: String::new(),
                        passed: false,
                        iteration: 0,
                    })
                }
                other => other,
            },
        )
        .collect()
}

/// Attempts for one mode on `test` with the given retrieval limits.
pub fn evaluate_mode<F: Scalar>(
    test: &[TaskExample],
    mode: PromptMode,
    memories: &Memories<F>,
    agents: &Agents<'_, F>,
    k: usize,
    theta: f64,
    cfg: &ExperimentConfig,
) -> Result<Vec<Attempt>> {
    if mode.is_pseudo() {
        return pseudo_attempts(test, mode, cfg.seed, agents, cfg);
    }
    let icfg = InferenceConfig {
        mode,
        k,
        theta,
        tolerate_errors: cfg.tolerate_errors,
        live_feedback: cfg.live_feedback,
    };
    inference_pass(test, agents, memories.for_mode(mode), &icfg)
}

/// Trains once, then evaluates every mode on the same test split.
pub fn run_matrix<F: Scalar>(
    train: &[TaskExample],
    test: &[TaskExample],
    modes: &[PromptMode],
    agents: &Agents<'_, F>,
    cfg: &ExperimentConfig,
) -> Result<(Vec<EvalReport>, Memories<F>)> {
    let (memories, _) = build_memories(train, agents, &cfg.train)?;
    let mut reports = Vec::with_capacity(modes.len());
    for &mode in modes {
        let attempts = evaluate_mode(test, mode, &memories, agents, cfg.k, cfg.theta, cfg)?;
        reports.push(EvalReport::from_attempts(
            mode,
            test,
            &attempts,
            cfg.snapshot(agents, mode),
        ));
    }
    Ok((reports, memories))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    TopK,
    Theta,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(SweepAxis::TopK),
            "theta" => Ok(SweepAxis::Theta),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

/// Evaluates each mode at each value of one retrieval parameter; the other
/// is held at `fixed` (θ for a top-k sweep, k for a θ sweep).
#[allow(clippy::too_many_arguments)]
pub fn sweep<F: Scalar>(
    axis: SweepAxis,
    values: &[f64],
    fixed: f64,
    modes: &[PromptMode],
    memories: &Memories<F>,
    test: &[TaskExample],
    agents: &Agents<'_, F>,
    cfg: &ExperimentConfig,
) -> Result<Vec<CurvePoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("sweep values must be sorted".into()));
    }
    let mut points = Vec::new();
    for &value in values {
        let (k, theta) = match axis {
            SweepAxis::TopK => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!(
                        "top-k value {value} is not a positive integer"
                    )));
                }
                (value as usize, fixed)
            }
            SweepAxis::Theta => (fixed as usize, value),
        };
        for &mode in modes {
            let attempts = evaluate_mode(test, mode, memories, agents, k, theta, cfg)?;
            let report = EvalReport::from_attempts(mode, test, &attempts, ConfigSnapshot::new());
            points.push(CurvePoint {
                value,
                mode,
                accuracy: report.average,
            });
        }
    }
    Ok(points)
}

/// Top-k sweep at θ = 0.
pub fn sweep_topk<F: Scalar>(
    k_values: &[usize],
    modes: &[PromptMode],
    memories: &Memories<F>,
    test: &[TaskExample],
    agents: &Agents<'_, F>,
    cfg: &ExperimentConfig,
) -> Result<Vec<CurvePoint>> {
    let values: Vec<f64> = k_values.iter().map(|&k| k as f64).collect();
    sweep(
        SweepAxis::TopK,
        &values,
        0.0,
        modes,
        memories,
        test,
        agents,
        cfg,
    )
}

/// θ sweep at k = 10.
pub fn sweep_theta<F: Scalar>(
    theta_values: &[f64],
    modes: &[PromptMode],
    memories: &Memories<F>,
    test: &[TaskExample],
    agents: &Agents<'_, F>,
    cfg: &ExperimentConfig,
) -> Result<Vec<CurvePoint>> {
    sweep(
        SweepAxis::Theta,
        theta_values,
        10.0,
        modes,
        memories,
        test,
        agents,
        cfg,
    )
}

/// Pseudo-mistake protocol over the whole set, no split.
pub fn pseudo_mistake_eval<F: Scalar>(
    full: &[TaskExample],
    mode: PromptMode,
    seed: u64,
    agents: &Agents<'_, F>,
    cfg: &ExperimentConfig,
) -> Result<EvalReport> {
    if !mode.is_pseudo() {
        return Err(Error::Config(format!(
            "{mode} is not a pseudo-mistake mode"
        )));
    }
    let attempts = pseudo_attempts(full, mode, seed, agents, cfg)?;
    let mut snapshot = cfg.snapshot(agents, mode);
    snapshot.insert("seed".into(), json!(seed));
    Ok(EvalReport::from_attempts(mode, full, &attempts, snapshot))
}

/// Training split of the first `in_domain_count` tasks (file order) and
/// test split of the remaining tasks.
pub fn ood_split(
    examples: &[TaskExample],
    in_domain_count: usize,
    spec: SplitSpec,
) -> Result<Split> {
    let tasks = task_order(examples);
    if in_domain_count == 0 || in_domain_count >= tasks.len() {
        return Err(Error::Config(format!(
            "in-domain task count {in_domain_count} must be in [1, {})",
            tasks.len()
        )));
    }
    let in_domain = &tasks[..in_domain_count];
    let s = split(examples, spec)?;
    Ok(Split {
        train: s
            .train
            .into_iter()
            .filter(|e| in_domain.iter().any(|t| t == e.task()))
            .collect(),
        test: s
            .test
            .into_iter()
            .filter(|e| !in_domain.iter().any(|t| t == e.task()))
            .collect(),
    })
}

/// Out-of-domain protocol: mistakes from in-domain tasks, evaluation on the
/// rest, retrieval limited to the single nearest mistake.
pub fn ood_eval<F: Scalar>(
    examples: &[TaskExample],
    in_domain_count: usize,
    spec: SplitSpec,
    modes: &[PromptMode],
    agents: &Agents<'_, F>,
    cfg: &ExperimentConfig,
) -> Result<Vec<EvalReport>> {
    let s = ood_split(examples, in_domain_count, spec)?;
    let cfg = ExperimentConfig {
        k: 1,
        ..cfg.clone()
    };
    let (mut reports, _) = run_matrix(&s.train, &s.test, modes, agents, &cfg)?;
    for r in &mut reports {
        r.config
            .insert("in_domain_count".into(), json!(in_domain_count));
    }
    Ok(reports)
}
