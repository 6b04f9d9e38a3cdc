use alloc::string::String;

/// Everything the core rejects.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid weight {value} at index {index}: weights must be finite and >= 0")]
    InvalidWeight { index: usize, value: f64 },
    #[error("all sampling weights are zero")]
    ZeroTotalWeight,
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("instance too large for exact enumeration: {0}")]
    TooLarge(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
