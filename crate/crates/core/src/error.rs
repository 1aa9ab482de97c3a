use thiserror::Error;

use crate::forward::ForwardResult;

pub type Result<T> = std::result::Result<T, MrsError>;

#[derive(Debug, Error)]
pub enum MrsError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Every reachable state assigns zero density to the observation at `t`.
    /// `partial` holds the forward pass up to `t - 1` when one exists.
    #[error("zero likelihood at t = {t}")]
    ZeroLikelihood {
        t: usize,
        partial: Option<Box<ForwardResult>>,
    },

    #[error("linear-scale likelihood underflowed to zero at t = {t}; use the normalized forward pass")]
    Underflow { t: usize },

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("regime {regime} has no posterior weight")]
    DegenerateRegime { regime: usize },

    #[error("support violation in regime {regime} at t = {t}")]
    SupportViolation { regime: usize, t: usize },

    #[error("one-dimensional search failed: {0}")]
    SearchFailed(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("counter overflow: {0}")]
    Overflow(String),

    #[error("b-tilde diverged for regime {regime} at t = {t} (value {value})")]
    Diverged { regime: usize, t: usize, value: f64 },

    #[error("all {0} restarts failed")]
    AllRestartsFailed(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("gap in daily series: {0}")]
    Gap(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MrsError {
    /// True for failures caused by the numerics rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MrsError::ZeroLikelihood { .. }
                | MrsError::Underflow { .. }
                | MrsError::Inconsistent(_)
                | MrsError::DegenerateRegime { .. }
                | MrsError::SupportViolation { .. }
                | MrsError::SearchFailed(_)
                | MrsError::Diverged { .. }
                | MrsError::AllRestartsFailed(_)
        )
    }
}
