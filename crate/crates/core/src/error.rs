use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LdlError>;

#[derive(Debug, Error)]
pub enum LdlError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("row {row}: label distribution sums to {sum} (tolerance {tolerance})")]
    SimplexViolation { row: usize, sum: f64, tolerance: f64 },

    #[error("row {row}: negative label degree {value}")]
    NegativeDegree { row: usize, value: f64 },

    #[error("row {row}: non-finite feature value")]
    NonFiniteFeature { row: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot form {k} clusters from {points} points")]
    TooManyClusters { k: usize, points: usize },

    #[error("objective is non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("missing score for algorithm `{algorithm}` on dataset `{dataset}` ({metric})")]
    MissingCell {
        dataset: String,
        algorithm: String,
        metric: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LdlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LdlError::Io {
            path: path.into(),
            source,
        }
    }
}
