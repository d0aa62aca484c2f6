use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed scan: {len} bytes is not a multiple of 16")]
    MalformedScan { len: usize },

    #[error("corrupt point {index}: non-finite coordinate or intensity")]
    CorruptPoint { index: usize },

    #[error("label count mismatch: {bytes} bytes for {points} points (expected {expected})")]
    LabelCount {
        bytes: usize,
        points: usize,
        expected: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid sufficient statistics: {0}")]
    InvalidStatistics(String),

    #[error("insufficient data for class {class}: {samples} samples, need at least {required}")]
    InsufficientData {
        class: u32,
        samples: usize,
        required: usize,
    },

    #[error("undefined metric ({metrics}): {reason}")]
    UndefinedMetric {
        metrics: &'static str,
        reason: String,
    },

    #[error("bad container: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

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
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

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
