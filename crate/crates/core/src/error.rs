//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Input values violate a precondition (non-finite entries, empty
    /// matrix, zero norm where a direction is required, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Dimensions of the arguments do not fit together.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A matrix that must have full (column) rank does not.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// An index is outside its valid range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
}

pub type Result<T> = std::result::Result<T, Error>;
