use thiserror::Error;

/// Errors raised by the simulator and the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A combination of otherwise valid parameters that the numerics cannot
    /// honour (step too coarse, window too short, ...).
    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("numerical range error: {0}")]
    NumericalRange(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("decay fit failed: {reason} ({diagnostics})")]
    Fit { reason: String, diagnostics: String },

    #[error("relaxation rate undefined: E_z and gamma_m are both zero")]
    UndefinedRate,

    #[error("dephasing reduction factor undefined: initial noise value is zero")]
    UndefinedFactor,

    #[error("unknown gate `{0}` (expected hadamard, phase or bitflip)")]
    UnknownGate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite, got {value}"),
        })
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    require_finite(name, value)?;
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive, got {value}"),
        })
    }
}
