use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid welfare weights: {0}")]
    InvalidWeights(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("instance too large for brute force: {0}")]
    TooLarge(String),

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("empty panel")]
    EmptyPanel,

    #[error("undefined statistic: {0}")]
    Undefined(String),
}
