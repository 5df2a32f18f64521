use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,

    #[error("non-finite observation {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("oracle undefined: n = {n} must exceed z^2 = {z_sq}")]
    OracleUndefined { n: usize, z_sq: f64 },

    #[error("quadrature did not converge on [{lo}, {hi}] (error estimate {error_estimate:e})")]
    Quadrature { lo: f64, hi: f64, error_estimate: f64 },

    #[error("infinite variance outside model class: {0}")]
    InfiniteVariance(String),

    #[error("invalid noise law: {0}")]
    InvalidLaw(String),

    #[error("blocks = {blocks} exceeds sample size {n}")]
    TooManyBlocks { blocks: usize, n: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
