use thiserror::Error;

/// Errors reported by the simulator. Infeasible parameter points are values,
/// not aborts, so grid sweeps can skip them and keep going.
#[derive(Debug, Clone, Error)]
pub enum AmmError {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A trade would drain the pool's risky reserve.
    #[error("insufficient reserves: requested {requested}, available {available}")]
    InsufficientReserves { requested: f64, available: f64 },

    /// A standing model assumption is violated (e.g. c ≥ √(2ηφ)).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The requested (signal, operation) combination has no supported
    /// closed form or solver route.
    #[error("unsupported capability: {0}")]
    Capability(String),

    /// An iterative solver or quadrature failed to reach its tolerance.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Array/grid shapes of combined inputs do not match.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A closed-form evaluation produced an internally inconsistent value.
    #[error("internal consistency error: {0}")]
    Inconsistency(String),

    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, AmmError>;

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(AmmError::Domain(format!("{name} must be positive, got {value}")));
    }
    Ok(())
}

pub(crate) fn require_nonnegative(name: &str, value: f64) -> Result<()> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(AmmError::Domain(format!(
            "{name} must be nonnegative, got {value}"
        )));
    }
    Ok(())
}
