use thiserror::Error;

/// Errors produced anywhere in the optimization stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (jitter escalated to {jitter:e})")]
    NotPsd { jitter: f64 },

    #[error("optimization did not converge: {0}")]
    DidNotConverge(String),

    #[error("importance weights degenerate (effective sample size {ess:.2})")]
    DegenerateWeights { ess: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("history of {size} points exceeds the nested Monte-Carlo limit of {limit}")]
    HistoryTooLarge { size: usize, limit: usize },

    #[error("point {0:?} lies outside the search domain")]
    OutOfDomain(Vec<f64>),

    #[error("curve length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
