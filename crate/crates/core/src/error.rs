use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for alphabet of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("entry {index} is negative or not finite: {value}")]
    InvalidEntry { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: f64 },

    #[error("empty alphabet or empty list")]
    Empty,

    #[error("Renyi order 1 is the relative entropy; use kl_divergence")]
    RenyiOrderOne,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("support violation in component {component} at symbol {index}")]
    SupportViolation { component: usize, index: usize },

    #[error("witness measure has zero mass and cannot be normalized")]
    Unnormalizable,

    #[error("optimizer did not produce any finite value")]
    NoFiniteValue,

    #[error("alphabet of size {len} is not an {m}-fold power")]
    NotPowerAlphabet { len: usize, m: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig})")]
    NotPsd { min_eig: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("correlation matrix must have unit diagonal")]
    NonUnitDiagonal,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: &str) -> Error {
    Error::InvalidParameter(String::from(msg))
}
