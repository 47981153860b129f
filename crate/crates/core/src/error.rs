//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs whose shapes cannot be combined.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Inputs violating a value-level contract (non-finite entries, a
    /// non-binary bit vector, an out-of-range probability, ...).
    #[error("invalid value: {0}")]
    InvalidValue(String),

    /// Exact enumeration refused because the model is too big. Never
    /// silently truncated.
    #[error("model too large to enumerate: min(|v|, |h|) = {smaller} exceeds limit {limit}")]
    ModelTooLarge { smaller: usize, limit: usize },

    /// A numerical invariant broke mid-computation (NaN/Inf, or a belief
    /// denominator collapsed). `iteration` is the sweep or step index.
    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    /// Training produced a non-finite parameter.
    #[error("training aborted at epoch {epoch}, batch {batch}: {message}")]
    TrainingAborted {
        epoch: usize,
        batch: usize,
        message: String,
    },

    /// Malformed input file. `offset` is the byte position of the problem.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// Bad run configuration (unknown key, invalid combination, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
