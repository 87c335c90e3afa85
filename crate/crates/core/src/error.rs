use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A configuration field failed to parse or validate.
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Two sampled fields (or a field and a grid) do not share the same quadrature grid.
    #[error("sampled field does not belong to this grid")]
    GridMismatch,

    /// A matrix expected to be complex symmetric is not.
    #[error("matrix is not symmetric: relative asymmetry {asymmetry:.3e} exceeds {tolerance:.1e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    /// Quadrature or truncation failed to converge.
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),

    /// The requested working point is outside the below-threshold model.
    #[error("above threshold: normalized pump {sigma:.6} > 1")]
    AboveThreshold { sigma: f64 },

    /// A calibration target cannot be reached with the available parameters.
    #[error("unachievable squeezing target {target_db:.3} dB (best possible {bound_db:.3} dB)")]
    Unachievable { target_db: f64, bound_db: f64 },

    /// An operation required data that is missing (empty decomposition, no calibration segment, ...).
    #[error("{0}")]
    Missing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Checks that `value` is finite and strictly positive.
pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}
