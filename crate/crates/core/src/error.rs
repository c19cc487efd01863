use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("category index {index} out of range for feature '{feature}' (cardinality {cardinality})")]
    CategoryOutOfRange {
        feature: String,
        index: usize,
        cardinality: usize,
    },

    #[error("missing targets for training-mode forward pass")]
    MissingTargets,

    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("series '{series}' is irregularly spaced at timestamp {timestamp}")]
    IrregularSpacing { series: String, timestamp: i64 },

    #[error("series '{series}' is too short: {len} steps, need at least {needed}")]
    SeriesTooShort {
        series: String,
        len: usize,
        needed: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("normalized deviation undefined: sum of |truth| is zero")]
    ZeroTruth,

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
