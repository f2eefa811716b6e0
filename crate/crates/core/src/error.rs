use thiserror::Error;

use crate::sampler::remote::RemoteError;

/// Errors raised by the library. Each variant carries enough context to be
/// reported to a user without the originating call site.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("embedding failed: {0}")]
    Embedding(String),

    #[error("embedding does not validate: {0}")]
    Validation(String),

    #[error("{what} needs {size} qubits, over the cap of {cap}")]
    SizeCap { what: String, size: usize, cap: usize },

    #[error("range violation: {0}")]
    Range(String),

    #[error(transparent)]
    Remote(#[from] RemoteError),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document {path}: {message}")]
    Schema { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
