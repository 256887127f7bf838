use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RtkError {
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("outer index {k} out of range for a schedule with {steps} segments")]
    OuterIndex { k: usize, steps: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty sample set")]
    EmptySamples,

    #[error("NFE budget {budget} is below the number of segments ({segments})")]
    BudgetTooSmall { budget: u64, segments: usize },

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RtkError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Self::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = RtkError> = std::result::Result<T, E>;
