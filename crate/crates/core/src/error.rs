use thiserror::Error;

/// Errors raised by problem assembly, the inner and outer solvers, and the diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HpoError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid hyperparameter domain: {0}")]
    InvalidDomain(String),

    #[error("mode conflict: {0}")]
    ModeConflict(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("inner dynamics diverged at step {step}: objective {value:e} exceeds 10x initial {initial:e}")]
    Divergence { step: usize, value: f64, initial: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("hyperparameter outside domain: {0}")]
    DomainViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("base point and model minimizer coincide; use the stationarity branch")]
    CoincidentPoints,

    #[error("evaluation failed at {at:?}: {message}")]
    EvaluationFailed { at: Vec<f64>, message: String },
}

pub type Result<T, E = HpoError> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(values: &[f64], context: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(HpoError::NonFinite(context.to_string()))
    }
}
