use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("turn {turn} is out of range for a conversation with {len} turns")]
    TurnOutOfRange { turn: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("missing data: {0}")]
    MissingData(String),

    /// Inconsistent inputs, e.g. a passage without a document mapping.
    #[error("data error: {0}")]
    Data(String),

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(&'static str),

    /// Something that should be impossible given the other invariants.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
