use thiserror::Error;

/// Errors raised anywhere in the exchange pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Shapes or dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A numeric or configuration argument is outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An allocation plan asked a sender for something it cannot provide.
    #[error("allocation error: {0}")]
    Allocation(String),

    /// A value does not fit the wire layout.
    #[error("encoding error: {0}")]
    Encode(String),

    /// A byte sequence is not a valid wire message.
    #[error("decoding error: {0}")]
    Decode(String),

    /// A peer sent something that violates the round protocol.
    #[error("protocol error from agent {sender}: {reason}")]
    Protocol { sender: u16, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
