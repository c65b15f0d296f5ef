//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A fixed-point format violates its invariants (I >= 1, F >= 0, N <= 32).
    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),

    /// A NaN or infinity reached the quantizer; upstream data is corrupted.
    #[error("non-finite value {value}{}", match .index { Some(i) => format!(" at element {i}"), None => String::new() })]
    NonFinite { value: f64, index: Option<usize> },

    /// Model, config, or shape inconsistency detected before or during a run.
    #[error("configuration error: {0}")]
    Config(String),

    /// A weight tensor referenced by the model is missing or malformed.
    #[error("weight store error: {0}")]
    Weights(String),

    /// Dataset is empty, truncated, or inconsistent with the model.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Structured file did not parse.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
