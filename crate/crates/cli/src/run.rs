use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use salam_core::assistant::export_finetune_records;
use salam_core::backends::{Backend, GenParams, RemoteBackend, ScriptedBackend};
use salam_core::embed::{EmbeddingProvider, HashingEmbedder, RemoteEmbedder};
use salam_core::harness::dataset::write_dataset;
use salam_core::harness::{
    build_memories, curve_csv, evaluate_mode, ingest, ood_eval, pseudo_mistake_eval, render_table,
    run_matrix, split, sweep_theta, sweep_topk, ConfigSnapshot, EvalReport, ExperimentConfig,
    Split, SplitSpec, SweepAxis,
};
use salam_core::http::HttpSettings;
use salam_core::memory::Polarity;
use salam_core::orchestrator::{training_pass, Agents, Checkpointing, TrainConfig};
use salam_core::{Error, Result, Store};

use crate::args::*;

pub const MODEL_KEY_VAR: &str = "SALAM_MODEL_API_KEY";
pub const EMBED_KEY_VAR: &str = "SALAM_EMBED_API_KEY";

/// Parses `scripted:PATH` or `remote:MODEL@BASE_URL`.
fn backend(spec: &str) -> Result<Box<dyn Backend>> {
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok(Box::new(ScriptedBackend::from_file(path)?));
    }
    if let Some(rest) = spec.strip_prefix("remote:") {
        let (model, url) = remote_parts(rest)?;
        return Ok(Box::new(RemoteBackend::new(
            settings(url, MODEL_KEY_VAR),
            model,
        )?));
    }
    Err(Error::Config(format!(
        "backend `{spec}` is neither scripted:PATH nor remote:MODEL@URL"
    )))
}

fn embedder(spec: &str, dim: usize) -> Result<Box<dyn EmbeddingProvider<f64>>> {
    if spec == "hash" {
        if dim == 0 {
            return Err(Error::Config("embed-dim must be positive".into()));
        }
        return Ok(Box::new(HashingEmbedder::with_dim(dim)));
    }
    if let Some(rest) = spec.strip_prefix("remote:") {
        let (model, url) = remote_parts(rest)?;
        return Ok(Box::new(RemoteEmbedder::new(
            settings(url, EMBED_KEY_VAR),
            model,
            dim,
        )?));
    }
    Err(Error::Config(format!(
        "embedder `{spec}` is neither hash nor remote:MODEL@URL"
    )))
}

fn remote_parts(rest: &str) -> Result<(&str, &str)> {
    match rest.split_once('@') {
        Some((m, u)) if !m.is_empty() && !u.is_empty() => Ok((m, u)),
        _ => Err(Error::Config(format!(
            "remote spec `{rest}` must be MODEL@BASE_URL"
        ))),
    }
}

fn settings(url: &str, key_var: &str) -> HttpSettings {
    let mut s = HttpSettings::new(url);
    s.api_key = std::env::var(key_var).ok().filter(|k| !k.is_empty());
    s
}

/// Stands in for an assistant that was not configured.
struct NoAssistant;

impl Backend for NoAssistant {
    fn id(&self) -> String {
        "none".into()
    }

    fn complete(&self, _prompt: &str, _params: &GenParams) -> Result<String> {
        Err(Error::Config("this run needs --assistant-backend".into()))
    }
}

struct Models {
    student: Box<dyn Backend>,
    assistant: Box<dyn Backend>,
    embedder: Box<dyn EmbeddingProvider<f64>>,
    params: GenParams,
}

impl Models {
    fn build(m: &ModelArgs) -> Result<Self> {
        Ok(Self {
            student: backend(&m.student_backend)?,
            assistant: match &m.assistant_backend {
                Some(spec) => backend(spec)?,
                None => Box::new(NoAssistant),
            },
            embedder: embedder(&m.embedder, m.embed_dim)?,
            params: params(m.max_tokens, m.temperature),
        })
    }

    fn agents(&self) -> Agents<'_> {
        Agents {
            student: self.student.as_ref(),
            assistant: self.assistant.as_ref(),
            embedder: self.embedder.as_ref(),
            params: &self.params,
        }
    }
}

fn params(max_tokens: u32, temperature: f64) -> GenParams {
    GenParams {
        max_tokens,
        temperature,
        ..GenParams::default()
    }
}

fn load_split(d: &DataArgs) -> Result<Split> {
    let examples = ingest(&d.data)?;
    split(
        &examples,
        SplitSpec {
            train_fraction: d.train_fraction,
            seed: d.split_seed,
        },
    )
}

fn train_config(t: &TrainingArgs) -> TrainConfig {
    TrainConfig {
        max_iters: t.max_iters,
        feedback_fraction: t.feedback_fraction,
        seed: t.seed,
        k: t.train_k,
        theta: t.train_theta,
        checkpoint: None,
    }
}

/// Flag values of a run, keyed like the flags (snake case), plus the
/// subcommand. Fed back through `--config` it reproduces the run.
fn snapshot(command: &str, args: &impl Serialize) -> Result<ConfigSnapshot> {
    let mut c = match serde_json::to_value(args)? {
        Value::Object(map) => map.into_iter().collect::<ConfigSnapshot>(),
        _ => ConfigSnapshot::new(),
    };
    c.insert("command".into(), json!(command));
    Ok(c)
}

/// Replaces the library snapshot with the flags, keeping the former under
/// `run` (backend and embedder identifiers, effective retrieval limits).
fn with_run_info(mut report: EvalReport, flags: &ConfigSnapshot) -> EvalReport {
    let run: serde_json::Map<String, Value> =
        std::mem::take(&mut report.config).into_iter().collect();
    report.config = flags.clone();
    report.config.insert("run".into(), Value::Object(run));
    report
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_reports(dir: &Path, reports: &[EvalReport]) -> Result<()> {
    for r in reports {
        write(&dir.join(format!("{}.json", r.mode.name())), &r.to_json())?;
    }
    let table = render_table(reports);
    write(&dir.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Ingest(a) => {
            let examples = ingest(&a.data)?;
            write_dataset(&examples, &a.out)?;
            println!("{} examples", examples.len());
        }
        Command::Train(a) => {
            let s = load_split(&a.data)?;
            let models = Models::build(&a.models)?;
            let dim = models.embedder.dim();
            let mut store = Store::new(Polarity::Mistakes, dim);
            let mut correct = a
                .correct_store
                .as_ref()
                .map(|_| Store::new(Polarity::Correct, dim));
            let mut cfg = train_config(&a.training);
            if let Some(cp) = &a.checkpoint {
                if cp.exists() {
                    store = Store::load(&a.store, Polarity::Mistakes, dim)?;
                    if let (Some(c), Some(path)) = (correct.as_mut(), &a.correct_store) {
                        *c = Store::load(path, Polarity::Correct, dim)?;
                    }
                }
                cfg.checkpoint = Some(Checkpointing {
                    path: cp.clone(),
                    store_path: a.store.clone(),
                    correct_store_path: a.correct_store.clone(),
                });
            }
            let outcome = training_pass(
                &s.train,
                &models.agents(),
                &mut store,
                correct.as_mut(),
                &cfg,
            )?;
            store.save(&a.store)?;
            if let (Some(c), Some(path)) = (&correct, &a.correct_store) {
                c.save(path)?;
            }
            println!(
                "{} training examples, {} mistakes stored, {} annotated",
                s.train.len(),
                store.len(),
                outcome.feedback_indices.len()
            );
        }
        Command::Eval(a) => {
            if a.mode.is_pseudo() {
                return Err(Error::Config(format!(
                    "{} is evaluated by the `pseudo` command",
                    a.mode
                )));
            }
            let s = load_split(&a.data)?;
            let models = Models::build(&a.models)?;
            let dim = models.embedder.dim();
            let store = match (a.mode.retrieves_from(), &a.store) {
                (None, _) => None,
                (Some(_), None) => {
                    return Err(Error::Config(format!("mode {} needs --store", a.mode)))
                }
                (Some(p), Some(path)) => Some(Store::load(path, p, dim)?),
            };
            let cfg = ExperimentConfig {
                tolerate_errors: a.options.tolerate_errors,
                live_feedback: a.options.live_feedback,
                ..ExperimentConfig::default()
            };
            let empty = || Store::new(Polarity::Mistakes, dim);
            let memories = match store {
                Some(st) if st.polarity() == Polarity::Correct => salam_core::harness::Memories {
                    mistakes: empty(),
                    correct: st,
                },
                Some(st) => salam_core::harness::Memories {
                    mistakes: st,
                    correct: Store::new(Polarity::Correct, dim),
                },
                None => salam_core::harness::Memories {
                    mistakes: empty(),
                    correct: Store::new(Polarity::Correct, dim),
                },
            };
            let agents = models.agents();
            let attempts = evaluate_mode(
                &s.test,
                a.mode,
                &memories,
                &agents,
                a.options.k,
                a.options.theta,
                &cfg,
            )?;
            let report = EvalReport::from_attempts(
                a.mode,
                &s.test,
                &attempts,
                cfg.snapshot(&agents, a.mode),
            );
            let report = with_run_info(report, &snapshot("eval", a)?);
            write(&a.report, &report.to_json())?;
            print!("{}", render_table(std::slice::from_ref(&report)));
        }
        Command::Matrix(a) => {
            let s = load_split(&a.data)?;
            let models = Models::build(&a.models)?;
            let cfg = experiment(&a.training, a.options.k, a.options.theta, &a.options);
            let (reports, _) = run_matrix(&s.train, &s.test, &a.modes, &models.agents(), &cfg)?;
            let flags = snapshot("matrix", a)?;
            let reports: Vec<EvalReport> = reports
                .into_iter()
                .map(|r| with_run_info(r, &flags))
                .collect();
            write_reports(&a.out_dir, &reports)?;
        }
        Command::Sweep(a) => {
            let axis: SweepAxis = a.axis.parse()?;
            let s = load_split(&a.data)?;
            let models = Models::build(&a.models)?;
            let agents = models.agents();
            let mut cfg = ExperimentConfig {
                train: train_config(&a.training),
                ..ExperimentConfig::default()
            };
            cfg.tolerate_errors = a.tolerate_errors;
            let (memories, _) = build_memories(&s.train, &agents, &cfg.train)?;
            let curve = match axis {
                SweepAxis::TopK => {
                    let ks = a
                        .values
                        .iter()
                        .map(|&v| {
                            if v >= 1.0 && v.fract() == 0.0 {
                                Ok(v as usize)
                            } else {
                                Err(Error::Config(format!(
                                    "top-k value {v} is not a positive integer"
                                )))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    sweep_topk(&ks, &a.modes, &memories, &s.test, &agents, &cfg)?
                }
                SweepAxis::Theta => {
                    sweep_theta(&a.values, &a.modes, &memories, &s.test, &agents, &cfg)?
                }
            };
            let csv = curve_csv(&curve);
            match &a.out {
                Some(path) => write(path, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Pseudo(a) => {
            if !a.mode.is_pseudo() {
                return Err(Error::Config(format!(
                    "{} is not a pseudo-mistake mode",
                    a.mode
                )));
            }
            let examples = ingest(&a.data)?;
            let student = backend(&a.student_backend)?;
            let embedder = HashingEmbedder::default();
            let params = params(a.max_tokens, a.temperature);
            let agents: Agents = Agents {
                student: student.as_ref(),
                assistant: &NoAssistant,
                embedder: &embedder,
                params: &params,
            };
            let mut cfg = ExperimentConfig {
                tolerate_errors: a.tolerate_errors,
                ..ExperimentConfig::default()
            };
            if let Some(path) = &a.preambles {
                let text = fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                cfg.preambles = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            }
            let report = pseudo_mistake_eval(&examples, a.mode, a.seed, &agents, &cfg)?;
            let report = with_run_info(report, &snapshot("pseudo", a)?);
            write(&a.report, &report.to_json())?;
            print!("{}", render_table(std::slice::from_ref(&report)));
        }
        Command::Ood(a) => {
            let examples = ingest(&a.data.data)?;
            let models = Models::build(&a.models)?;
            let mut cfg = ExperimentConfig {
                theta: a.theta,
                train: train_config(&a.training),
                ..ExperimentConfig::default()
            };
            cfg.tolerate_errors = a.tolerate_errors;
            let spec = SplitSpec {
                train_fraction: a.data.train_fraction,
                seed: a.data.split_seed,
            };
            let reports = ood_eval(
                &examples,
                a.in_domain_count,
                spec,
                &a.modes,
                &models.agents(),
                &cfg,
            )?;
            let flags = snapshot("ood", a)?;
            let reports: Vec<EvalReport> = reports
                .into_iter()
                .map(|r| with_run_info(r, &flags))
                .collect();
            write_reports(&a.out_dir, &reports)?;
        }
        Command::ExportFinetune(a) => {
            let store: Store = Store::load(&a.store, Polarity::Mistakes, a.embed_dim)?;
            let n = export_finetune_records(&store, &a.out)?;
            println!("{n} records");
        }
    }
    Ok(())
}

fn experiment(t: &TrainingArgs, k: usize, theta: f64, o: &EvalOptions) -> ExperimentConfig {
    ExperimentConfig {
        k,
        theta,
        train: train_config(t),
        tolerate_errors: o.tolerate_errors,
        live_feedback: o.live_feedback,
        ..ExperimentConfig::default()
    }
}
