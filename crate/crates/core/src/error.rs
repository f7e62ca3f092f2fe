use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),
}

pub type Result<T> = std::result::Result<T, Error>;
