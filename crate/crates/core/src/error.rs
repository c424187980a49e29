use thiserror::Error;

use crate::estimator::FitResult;

pub type Result<T> = std::result::Result<T, HawkesError>;

#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("non-finite likelihood: intensity {intensity} at event {index}")]
    NonFiniteLikelihood { index: usize, intensity: f64 },

    #[error("simulation exceeded the event cap of {cap} (explosive parameters?)")]
    Explosion { cap: usize },

    #[error("no start converged; best log-likelihood {}", .0.log_lik)]
    FitFailure(Box<FitResult>),

    #[error("autocorrelation undefined for a constant series")]
    ConstantSeries,

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: slice times must be non-decreasing and unique per side")]
    Ordering { line: usize },

    #[error("incomplete grid: missing cell (window {window}, kernel {kernel})")]
    IncompleteGrid { window: String, kernel: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> HawkesError {
    HawkesError::Domain(msg.into())
}
