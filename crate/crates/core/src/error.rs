use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, left is {left:?}, right is {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: produced a non-finite entry")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not orthogonal: |Y^T Y - I|_F = {deviation:e} exceeds {tolerance:e}")]
    NotOrthogonal { deviation: f64, tolerance: f64 },

    #[error("matrix is not an inverse: |W X - I|_F = {residual:e} exceeds {tolerance:e}")]
    NotAnInverse { residual: f64, tolerance: f64 },

    #[error(
        "iterate no longer commutes with X: relative commutator {drift:e} exceeds {tolerance:e}"
    )]
    CommutatorDrift { drift: f64, tolerance: f64 },

    #[error("column {index} of X is zero")]
    ZeroColumn { index: usize },

    #[error("matrix generation failed: condition cap {cap} not met after {attempts} draws")]
    GenerationFailed { cap: f64, attempts: usize },

    #[error("trace format: {0}")]
    TraceFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
