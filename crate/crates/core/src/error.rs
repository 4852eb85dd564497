use thiserror::Error;

/// Errors produced by the fitting, tuning and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The data or problem carries no usable information (zero spread, rank deficiency).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Malformed input data (lengths, non-finite values, parse failures).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not implemented: {0}")]
    NotImplemented(String),

    /// Too many replicate-level failures in a resampling or simulation run.
    #[error("{failed} of {total} replicates failed")]
    ReplicateFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
