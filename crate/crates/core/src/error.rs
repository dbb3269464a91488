use thiserror::Error;

use crate::region::RegionId;

/// Errors raised by the optimizer components.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EsbbError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A caller broke a documented precondition (e.g. simulating an infeasible point).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("region {0} has no known feasible point")]
    RegionEmpty(RegionId),

    #[error("not found: {0}")]
    NotFound(String),

    /// An invariant that construction should make impossible did not hold.
    #[error("internal consistency error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, EsbbError>;

pub(crate) fn check_dimension(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(EsbbError::DimensionMismatch { expected, actual })
    }
}
