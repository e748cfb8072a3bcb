use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A physical or numerical parameter violates its constraint.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Two adjacent nodes are closer than [`crate::forces::DEGENERATE_LENGTH`].
    #[error("degenerate segment {index}: endpoints coincide")]
    DegenerateSegment { index: usize },

    /// A direction vector with (near) zero length was supplied.
    #[error("degenerate vector: zero length")]
    DegenerateVector,

    #[error("array length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("node index {index} out of range for a cable of {len} nodes")]
    NodeOutOfRange { index: usize, len: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
