use thiserror::Error;

pub type Result<T> = std::result::Result<T, DickeError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DickeError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("singular atomic boundary: p2^2 + q2^2 = {radius_sq:.15} is within {guard:e} of 4")]
    SingularBoundary { radius_sq: f64, guard: f64 },

    #[error("energy window [{lo}, {hi}] contains no levels")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("energy shell at E = {energy} has no accessible cells")]
    EmptyShell { energy: f64 },

    #[error("eigensolver failed (dimension {dim}, info {info}): {context}")]
    Eigensolver { dim: usize, info: i32, context: String },
}

impl DickeError {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        DickeError::InvalidParam {
            field,
            reason: reason.into(),
        }
    }
}
