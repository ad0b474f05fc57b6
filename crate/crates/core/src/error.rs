use std::io;

/// Errors surfaced by the storage engine and the graph layer on top of it.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("engine is closed")]
    Closed,

    /// A previous write failed; the engine refuses further mutations.
    #[error("engine is read-only after a failed write")]
    ReadOnly,

    #[error("key of {len} bytes exceeds the maximum of {max}")]
    KeyTooLong { len: usize, max: usize },

    #[error("checksum mismatch in {file} at offset {offset}")]
    Checksum { file: String, offset: u64 },

    #[error("corrupt data: {0}")]
    Corruption(String),

    /// Bytes that do not decode as a payload or an Elias-Fano stream.
    #[error("decode error: {0}")]
    Decode(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// The cost model divides by the update fraction.
    #[error("cost is undefined when the update fraction is zero")]
    ZeroUpdateFraction,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn decode(msg: impl Into<String>) -> Self {
        Error::Decode(msg.into())
    }
}
