use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the grading engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty sequence")]
    EmptySequence,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("essay is empty after tokenization")]
    EmptyEssay,

    #[error("line {line}: {field}: {message}")]
    Load {
        line: usize,
        field: String,
        message: String,
    },

    #[error("split error: {0}")]
    Split(String),

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint holds a {found} model, expected {expected}")]
    KindMismatch { found: String, expected: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Load {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
