use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the channel model, rate evaluation, solver and harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("stacked precoder must have unit norm, got norm {0}")]
    NormViolation(f64),

    #[error("user {user} does not decode message {message}")]
    NotADecoder { message: String, user: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("block {block} of the denominator operator is not positive definite")]
    NotPositiveDefinite { block: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
