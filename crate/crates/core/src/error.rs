use thiserror::Error;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("ring size {n} not supported here (need at least {min})")]
    RingTooSmall { n: usize, min: usize },

    #[error("site {site} out of range for ring of size {n}")]
    SiteOutOfRange { site: usize, n: usize },

    #[error("source is not centered: stationary mean {mean:e} exceeds tolerance {tolerance:e}")]
    Uncentered { mean: f64, tolerance: f64 },

    #[error("matrix has index {index}; {operation} requires index {required}")]
    IndexMismatch {
        operation: &'static str,
        index: usize,
        required: &'static str,
    },

    #[error("group inverse does not exist: matrix index is {index}")]
    NoGroupInverse { index: usize },

    #[error("linear system is singular or inconsistent: {0}")]
    Singular(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid rate at site {site}: {value}")]
    InvalidRate { site: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
