use thiserror::Error;

/// Errors raised by the model-level computations (TCL, battery, fleet, market, economics).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value for `{0}`")]
    NonFinite(&'static str),

    #[error("unit mismatch: battery is in {battery}, signal is in {signal}")]
    UnitMismatch { battery: String, signal: String },

    #[error("sample {index} of normalized signal is {value}, outside [-1, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("target {target} kW is outside the fleet envelope [{min}, {max}] kW")]
    BeyondEnvelope { target: f64, min: f64, max: f64 },
}

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonFinite(name))
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    check_finite(name, value)?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("must be > 0, got {value}"),
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<f64, ModelError> {
    check_finite(name, value)?;
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("must be >= 0, got {value}"),
        })
    }
}
