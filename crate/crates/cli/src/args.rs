use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use salam_core::PromptMode;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "salam",
    version,
    about = "Learn from a model's mistakes with a study assistant"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// JSON file of flag values; command-line flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Print errors to stderr as {"error", "message"} JSON.
    #[arg(long, global = true)]
    pub json_errors: bool,

    /// Worker threads for backend calls (default: one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize a dataset file.
    Ingest(IngestArgs),
    /// Collect mistakes on the training split and annotate them.
    Train(TrainArgs),
    /// Evaluate one mode on the test split.
    Eval(EvalArgs),
    /// Train once and evaluate several modes on the same test split.
    Matrix(MatrixArgs),
    /// Accuracy curve over top-k or similarity threshold.
    Sweep(SweepArgs),
    /// Pseudo-mistake evaluation over the whole dataset.
    Pseudo(PseudoArgs),
    /// Mistakes from the first tasks, evaluation on the rest.
    Ood(OodArgs),
    /// Write assistant finetuning records from an annotated store.
    ExportFinetune(ExportArgs),
}

impl Command {
    pub const NAMES: [&'static str; 8] = [
        "ingest",
        "train",
        "eval",
        "matrix",
        "sweep",
        "pseudo",
        "ood",
        "export-finetune",
    ];
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Dataset JSONL.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelArgs {
    /// `scripted:PATH` or `remote:MODEL@BASE_URL`.
    #[arg(long)]
    pub student_backend: String,
    /// Same forms as the student backend.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assistant_backend: Option<String>,
    /// `hash` or `remote:MODEL@BASE_URL`.
    #[arg(long, default_value = "hash")]
    pub embedder: String,
    #[arg(long, default_value_t = salam_core::embed::DEFAULT_DIM)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 512)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 2)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1.0)]
    pub feedback_fraction: f64,
    /// Seeds feedback selection.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Retrieval while refining training answers.
    #[arg(long, default_value_t = 3)]
    pub train_k: usize,
    #[arg(long, default_value_t = 0.9)]
    pub train_theta: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalOptions {
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0.9)]
    pub theta: f64,
    /// Count failed backend calls as wrong answers instead of aborting.
    #[arg(long)]
    pub tolerate_errors: bool,
    /// Ask the assistant for a fresh guideline per test query (salam only).
    #[arg(long)]
    pub live_feedback: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
    /// Mistake store to write.
    #[arg(long)]
    pub store: PathBuf,
    /// Also record first-try correct answers here.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct_store: Option<PathBuf>,
    /// Resume file; progress is saved after every example.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub options: EvalOptions,
    #[arg(long)]
    pub mode: PromptMode,
    /// Store to retrieve from: mistakes, or correct answers for fewshot_correct.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MatrixArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub options: EvalOptions,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "zero_shot,fewshot_correct,fewshot_mistake,salam"
    )]
    pub modes: Vec<PromptMode>,
    /// One `<mode>.json` report per mode plus `table.txt`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
    /// `topk` (θ held at 0) or `theta` (k held at 10).
    #[arg(long)]
    pub axis: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "salam")]
    pub modes: Vec<PromptMode>,
    #[arg(long)]
    pub tolerate_errors: bool,
    /// CSV output; stdout when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PseudoArgs {
    /// Dataset JSONL; every example is evaluated.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub student_backend: String,
    #[arg(long, default_value_t = 512)]
    pub max_tokens: u32,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long)]
    pub mode: PromptMode,
    /// Seeds the wrong-option sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON object mapping task name to a description line for pseudo_fewshot.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preambles: Option<PathBuf>,
    #[arg(long)]
    pub tolerate_errors: bool,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct OodArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub models: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub training: TrainingArgs,
    /// Number of leading tasks (file order) that supply mistakes.
    #[arg(long)]
    pub in_domain_count: usize,
    #[arg(long, default_value_t = 0.9)]
    pub theta: f64,
    #[arg(long)]
    pub tolerate_errors: bool,
    #[arg(long, value_delimiter = ',', default_value = "zero_shot,salam")]
    pub modes: Vec<PromptMode>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = salam_core::embed::DEFAULT_DIM)]
    pub embed_dim: usize,
    #[arg(long)]
    pub out: PathBuf,
}
