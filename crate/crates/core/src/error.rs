//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Array shapes disagree with the MDP or network they are used with.
    #[error("dimension mismatch: {0}")]
    Shape(String),

    /// An input failed validation (probabilities, ranges, counts).
    #[error("invalid input: {0}")]
    Validation(String),

    /// The induced Markov chain did not reach stationarity.
    #[error("ergodicity failure: {0}")]
    NonErgodic(String),

    /// A condition that cannot occur for valid inputs did occur.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
