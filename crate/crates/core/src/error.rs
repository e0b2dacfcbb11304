use std::io;

use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller passed an argument that violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An operation was invoked in the wrong lifecycle state.
    #[error("invalid state: {0}")]
    State(String),

    /// An internal shape or structural invariant does not hold.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A file does not follow the expected layout (bad magic, version, manifest).
    #[error("format error: {0}")]
    Format(String),

    /// A file ended mid-record or declared data it does not contain.
    #[error("corrupt data at byte offset {offset}: {message}")]
    Corrupt { offset: u64, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The surrogate ODE could not be integrated past `time`.
    #[error("reconstruction failed at t = {time}: {message}")]
    Reconstruct { time: f64, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

pub(crate) fn state(msg: impl Into<String>) -> Error {
    Error::State(msg.into())
}

pub(crate) fn invariant(msg: impl Into<String>) -> Error {
    Error::Invariant(msg.into())
}
