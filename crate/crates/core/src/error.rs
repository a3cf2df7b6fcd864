use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = VwsdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VwsdError {
    #[error("{path}:{line}: {message}")]
    Dataset {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data file has {data} samples but gold file has {gold} lines")]
    GoldLineCount { data: usize, gold: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm vector in {0}")]
    ZeroVector(&'static str),

    #[error("degenerate {0}: weighted sum has zero norm")]
    Degenerate(&'static str),

    #[error("expected {expected} candidates, got {actual}")]
    CandidateCount { expected: usize, actual: usize },

    #[error("backend `{backend}` does not support {capability}")]
    Unsupported {
        backend: String,
        capability: &'static str,
    },

    #[error("invalid token span {start}..{end} for {len} tokens")]
    InvalidSpan { start: usize, end: usize, len: usize },

    #[error("image {reference}: {message}")]
    Image { reference: String, message: String },

    #[error("batch element {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<VwsdError>,
    },

    #[error("no definitions found for `{0}`")]
    NoDefinitions(String),

    #[error("translation to `{language}` failed: {message}")]
    Translation { language: String, message: String },

    #[error("{failed} of {total} samples failed, above the 10% abort threshold")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{0}")]
    Backend(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VwsdError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        VwsdError::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn image(reference: impl Into<String>, message: impl ToString) -> Self {
        VwsdError::Image {
            reference: reference.into(),
            message: message.to_string(),
        }
    }

    /// Errors caused by the caller's inputs or configuration rather than by
    /// the data or the runtime.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            VwsdError::Config(_)
                | VwsdError::UnknownConfigKey(_)
                | VwsdError::CandidateCount { .. }
                | VwsdError::Dataset { .. }
                | VwsdError::GoldLineCount { .. }
                | VwsdError::Io { .. }
        )
    }
}
