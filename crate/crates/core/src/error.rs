use thiserror::Error;

/// Errors raised by the physics kernels and the explicit solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("{name} = {value} is out of range: expected {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error(
        "transmembrane potential |V_m| = {v_m} V exceeds {limit} V; pore-creation factor would overflow"
    )]
    TransmembraneOverflow { v_m: f64, limit: f64 },

    #[error("integration step {dt} s must be smaller than the horizon {t_end} s")]
    StepExceedsHorizon { dt: f64, t_end: f64 },

    #[error("{solver} time step {dt} s violates the stability bound {bound} s")]
    Unstable {
        solver: &'static str,
        dt: f64,
        bound: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type ModelResult<T> = Result<T, ModelError>;

pub(crate) fn require_positive(name: &'static str, value: f64) -> ModelResult<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonPositive { name, value })
    }
}
