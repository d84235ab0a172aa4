use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T> = std::result::Result<T, PoaError>;

#[derive(Debug, Error)]
pub enum PoaError {
    /// Malformed input: bad indices, wrong vector lengths, violated invariants.
    #[error("validation error: {0}")]
    Validation(String),

    /// An enumeration would exceed its configured size cap.
    #[error("capacity exceeded: {what} has {count} elements (cap {cap})")]
    Capacity {
        what: &'static str,
        count: u128,
        cap: u128,
    },

    /// The LP solver finished with a status that valid inputs can never produce.
    #[error("internal LP error: {context} returned {status:?}")]
    LpStatus {
        context: &'static str,
        status: LpStatus,
    },

    #[error("LP solver failure: {0}")]
    Solver(String),

    /// A verified postcondition did not hold.
    #[error("invariant violation: {0}")]
    Invariant(String),
}

impl PoaError {
    pub fn validation(msg: impl Into<String>) -> Self {
        PoaError::Validation(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        PoaError::Invariant(msg.into())
    }
}
