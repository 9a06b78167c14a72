//! Long-term conversational memory with hierarchical compaction,
//! importance-based pruning, hybrid retrieval and proactive engagement.

pub mod config;
pub mod dimf;
pub mod emotion;
pub mod engagement;
pub mod engine;
pub mod error;
pub mod hash;
pub mod importance;
pub mod journal;
pub mod model;
pub mod record;
pub mod replay;
pub mod retrieval;
pub mod snapshot;
pub mod state;
pub mod summarize;
pub mod tbc;
pub mod text;

pub use config::{EngineConfig, EpochConfig, ImportanceWeights};
pub use engine::{recover, Engine, SharedEngine};
pub use error::EngineError;
pub use model::{EmotionLabel, EmotionState, EntryId, EntryKind, MemoryEntry, Timestamp, UtteranceType};
pub use state::EngineState;
