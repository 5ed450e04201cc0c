use alloc::string::String;

use crate::memory::Region;

/// Errors raised by the memory model, the sampling primitives and the
/// algorithms built on top of them.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// Parameters that violate an algorithm's preconditions.
    #[error("configuration error: {0}")]
    Config(String),

    /// A formula evaluated outside of its domain of validity.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of bounds for region `{region}` of length {len}")]
    OutOfBounds {
        region: Region,
        index: usize,
        len: usize,
    },

    #[error("slot {index} of region `{region}` was read before it was written")]
    EmptySlot { region: Region, index: usize },

    /// Authentication of a ciphertext failed (wrong key or tampered bytes).
    #[error("ciphertext failed authentication")]
    Integrity,

    /// A ciphertext authenticated but its plaintext is not well formed for
    /// the context it was read in.
    #[error("malformed plaintext: {0}")]
    Malformed(String),

    #[error(
        "private memory exhausted: requested {requested} slots with {used} of {capacity} in use"
    )]
    PrivateMemoryExceeded {
        requested: usize,
        used: usize,
        capacity: usize,
    },

    #[error("query out of range: {0}")]
    QueryOutOfRange(String),

    #[error("key {key} is not a member of sample {sample}")]
    NotAMember { sample: usize, key: u64 },

    #[error("oblivious shuffle overflowed on {attempts} consecutive attempts")]
    ShuffleRetriesExhausted { attempts: u32 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
