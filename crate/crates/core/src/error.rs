use thiserror::Error;

/// Errors raised by the numerical engine.
///
/// Every variant carries enough context to tell the caller which field,
/// constraint or flow produced it.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GaugeError {
    #[error("non-finite evaluation of `{label}`")]
    NonFiniteEvaluation { label: String },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("branch violation: {0}")]
    BranchViolation(String),

    #[error("gauge cut is not transversal to the orbits (condition number {condition:e})")]
    SingularTransversality { condition: f64 },

    #[error("integrator step underflow at s = {s} (step {step:e})")]
    StepFailure { s: f64, step: f64 },

    #[error("sector mismatch: {0}")]
    SectorMismatch(String),

    #[error("range violation: {0}")]
    RangeViolation(String),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("field support reached the boundary band: {0}")]
    SupportEscape(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = GaugeError> = std::result::Result<T, E>;
