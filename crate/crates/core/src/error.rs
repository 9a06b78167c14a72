use std::io;

use thiserror::Error;

use crate::config::ConfigError;
use crate::importance::ImportanceError;
use crate::model::{EntryId, Timestamp};
use crate::record::RecordError;
use crate::summarize::SummarizeError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("clock went backwards for user {user_id}: {got} < {last}")]
    Clock {
        user_id: String,
        last: Timestamp,
        got: Timestamp,
    },
    #[error("no live entry {0}")]
    NotFound(EntryId),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
    #[error(transparent)]
    Importance(#[from] ImportanceError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("journal corrupt at seq {seq}: {msg}")]
    Corrupt { seq: u64, msg: String },
    #[error("format: {0}")]
    Format(String),
    #[error("snapshot was written under config {found:016x}, engine has {expected:016x}")]
    ConfigMismatch { expected: u64, found: u64 },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl From<RecordError> for EngineError {
    fn from(e: RecordError) -> Self {
        Self::Format(e.to_string())
    }
}
