use std::path::PathBuf;

use thiserror::Error;

/// Error type shared by every module in the toolkit.
#[derive(Debug, Error)]
pub enum KpError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed JSON line: {msg}")]
    JsonLine { path: PathBuf, line: usize, msg: String },

    #[error("{path}:{line}: missing field `{field}`")]
    MissingField { path: PathBuf, line: usize, field: String },

    #[error("{path}: XML error at byte {pos}: {msg}")]
    Xml { path: PathBuf, pos: u64, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("document id mismatch: {0}")]
    IdMismatch(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("non-finite value in tensor `{0}`")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, KpError>;

impl KpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KpError::Io { path: path.into(), source }
    }

    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            KpError::Divergence(_) => 3,
            KpError::Checkpoint(_) | KpError::VocabMismatch(_) => 4,
            KpError::IdMismatch(_) => 5,
            _ => 2,
        }
    }
}
