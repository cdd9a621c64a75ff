use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric argument outside the domain of the model it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range for {what} (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("state error: {0}")]
    State(String),

    #[error("decode error at byte {offset}: {message}")]
    Decode { offset: usize, message: String },

    #[error("validation error in field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("bus error: {0}")]
    Bus(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// everything that aborts a run after it started.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Checkpoint(_) => 2,
            _ => 3,
        }
    }
}
