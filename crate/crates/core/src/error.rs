use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A law, environment or configuration parameter is outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The entropy series diverges; `lower_bound` is the partial sum reached.
    #[error("entropy diverges (partial sum {lower_bound})")]
    DivergentEntropy { lower_bound: f64 },

    /// A numerical routine could not establish the bound it was asked for.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("length mismatch: {left} path positions vs {right} values")]
    LengthMismatch { left: usize, right: usize },

    /// The law/environment combination is incompatible with the requested experiment.
    #[error("incompatible: {0}")]
    Incompatible(String),

    /// A property that must hold by construction was observed to fail.
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }
}
