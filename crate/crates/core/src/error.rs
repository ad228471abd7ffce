//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Instance or argument data is malformed (bad dimensions, NaN, empty set).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numeric routine left its guaranteed envelope (singular basis,
    /// stalled simplex, inconsistent bounds). Never silently absorbed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A subordinate solve hit an explicit node or time limit.
    #[error("limit reached: {0}")]
    LimitReached(String),

    /// An internal contract was violated; indicates a bug, not bad data.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
