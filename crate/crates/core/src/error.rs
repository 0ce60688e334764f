use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    /// Arguments violate an ordering or regime precondition.
    #[error("domain violation: {0}")]
    Domain(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("grid resolution: {0}")]
    Resolution(String),

    /// The Picard iteration stopped contracting.
    #[error("non-contraction after {iterations} iterations (measured Picard ratio {ratio:.4})")]
    NonContraction { iterations: usize, ratio: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Two artifacts that must describe the same experiment do not.
    #[error("configuration mismatch: {0}")]
    Mismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the caller's inputs rather than by numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            LabError::InvalidParameter { .. } | LabError::Mismatch(_) | LabError::Format(_)
        )
    }
}

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LabError::Numerical(format!("{what} is not finite ({value})")))
    }
}
