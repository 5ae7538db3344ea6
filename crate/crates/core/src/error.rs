use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record{}: {reason}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    MalformedRecord { line: Option<usize>, reason: String },

    #[error("text to embed is empty")]
    EmptyText,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("store polarity mismatch: expected {expected}, found {actual}")]
    PolarityMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("invalid store entry: {0}")]
    InvalidEntry(String),

    #[error("corrupt store line {line}: {reason}")]
    CorruptLine { line: usize, reason: String },

    #[error("unsupported store schema version {found} (expected {expected})")]
    SchemaVersion { found: u64, expected: u64 },

    #[error("feedback prompt requires the target answer")]
    MissingTarget,

    #[error("mode {0} requires retrieved context")]
    MissingContext(&'static str),

    #[error("mode {0} requires a pseudo-wrong label")]
    MissingPseudoLabel(&'static str),

    #[error("pseudo label ({0}) is not a valid wrong option")]
    InvalidPseudoLabel(char),

    #[error("pseudo few-shot prompts need exactly {expected} demonstrations, got {actual}")]
    DemonstrationCount { expected: usize, actual: usize },

    #[error("could not parse feedback reply: {0}")]
    FeedbackParse(String),

    #[error("store entries lack guidelines: {}", .0.join(", "))]
    UnannotatedEntries(Vec<String>),

    #[error("task `{task}` has {count} example(s); at least {required} are needed")]
    TinyTask {
        task: String,
        count: usize,
        required: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no scripted rule matched and no default reply is configured")]
    NoRule,

    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: Option<usize>, reason: impl Into<String>) -> Self {
        Error::MalformedRecord {
            line,
            reason: reason.into(),
        }
    }

    /// Failures caused by remote services or the filesystem rather than by
    /// bad input. The CLI maps these to a distinct exit code.
    pub fn is_external(&self) -> bool {
        matches!(
            self,
            Error::ProviderUnavailable(_)
                | Error::RateLimited { .. }
                | Error::Io { .. }
                | Error::NoRule
                | Error::FeedbackParse(_)
        )
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRecord { .. } => "malformed-record",
            Error::EmptyText => "empty-text",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::PolarityMismatch { .. } => "polarity-mismatch",
            Error::InvalidEntry(_) => "invalid-entry",
            Error::CorruptLine { .. } => "corrupt-line",
            Error::SchemaVersion { .. } => "schema-version",
            Error::MissingTarget => "missing-target",
            Error::MissingContext(_) => "missing-context",
            Error::MissingPseudoLabel(_) => "missing-pseudo-label",
            Error::InvalidPseudoLabel(_) => "invalid-pseudo-label",
            Error::DemonstrationCount { .. } => "demonstration-count",
            Error::FeedbackParse(_) => "feedback-parse",
            Error::UnannotatedEntries(_) => "unannotated-entries",
            Error::TinyTask { .. } => "tiny-task",
            Error::Config(_) => "config",
            Error::NoRule => "no-rule",
            Error::ProviderUnavailable(_) => "provider-unavailable",
            Error::RateLimited { .. } => "rate-limited",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
