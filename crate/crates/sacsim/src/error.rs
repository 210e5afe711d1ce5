//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model description violated a structural rule (bad field value,
    /// mismatched layer shapes, exponent out of range, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A manifest or binary artifact could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A cell byte uses a reserved power code or a non-canonical zero
    /// encoding.
    #[error("malformed cell byte 0x{byte:02x}: {reason}")]
    MalformedCell { byte: u8, reason: &'static str },

    /// An instruction field does not fit its encoding width.
    #[error("instruction field overflow: {0}")]
    FieldOverflow(String),

    /// A load-weights payload does not match the geometry announced by its
    /// instruction word or the physical array.
    #[error("payload mismatch: {0}")]
    PayloadMismatch(String),

    /// A 32-bit accumulator overflowed. Reported, never silently wrapped.
    #[error("accumulator overflow at output row {row}, input vector {vector}")]
    AccumOverflow { row: usize, vector: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidModel(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
