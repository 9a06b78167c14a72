//! Shared domain types and their canonical encoding.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::emotion::classify_quadrant;
use crate::record::{quantize, Record, RecordError};

/// Seconds since the Unix epoch.
pub type Timestamp = i64;
/// A span of simulated time in seconds.
pub type Seconds = i64;

pub const DAY: Seconds = 86_400;
pub const HOUR: Seconds = 3_600;
pub const WEEK: Seconds = 7 * DAY;

/// Unique identifier of a memory entry.
///
/// Raw entries are numbered densely from 1 in ingest order; merged and
/// meta entries are allocated from [`EntryId::COMPOSITE_BASE`] upward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryId(pub u64);

impl EntryId {
    pub const COMPOSITE_BASE: u64 = 1 << 48;

    pub fn is_composite(self) -> bool {
        self.0 >= Self::COMPOSITE_BASE
    }
}

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for EntryId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(EntryId)
    }
}

macro_rules! text_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(concat!("unknown ", stringify!($name), " {:?}"), other)),
                }
            }
        }
    };
}

text_enum!(
    /// What an entry represents.
    EntryKind { Raw => "raw", Summary => "summary", Meta => "meta" }
);

text_enum!(
    UtteranceType {
        UserUtterance => "user",
        CompanionUtterance => "companion",
        SystemEvent => "system",
    }
);

text_enum!(
    EmotionLabel {
        Happy => "happy",
        Sad => "sad",
        Angry => "angry",
        Anxious => "anxious",
        Neutral => "neutral",
    }
);

/// Valence/arousal coordinates with a categorical label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmotionState {
    pub valence: f64,
    pub arousal: f64,
    pub label: EmotionLabel,
    pub confidence: f64,
}

impl EmotionState {
    /// Clamps and quantizes the coordinates, then derives the label from
    /// the stored (quantized) values so the label invariant survives
    /// serialization.
    pub fn new(valence: f64, arousal: f64, confidence: f64) -> Self {
        let valence = quantize(valence.clamp(-1.0, 1.0));
        let arousal = quantize(arousal.clamp(-1.0, 1.0));
        Self {
            valence,
            arousal,
            label: classify_quadrant(valence, arousal),
            confidence: quantize(confidence.clamp(0.0, 1.0)),
        }
    }

    pub fn neutral() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }
}

/// One unit of stored memory.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub id: EntryId,
    pub user_id: String,
    pub kind: EntryKind,
    pub utterance_type: UtteranceType,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub text: String,
    pub emotion: EmotionState,
    pub importance: f64,
    pub level: u32,
    pub pinned: bool,
    pub source_ids: BTreeSet<EntryId>,
    pub covered_count: u64,
}

impl MemoryEntry {
    pub fn raw(
        id: EntryId,
        user_id: impl Into<String>,
        utterance_type: UtteranceType,
        t: Timestamp,
        text: impl Into<String>,
        emotion: EmotionState,
        importance: f64,
    ) -> Self {
        Self {
            id,
            user_id: user_id.into(),
            kind: EntryKind::Raw,
            utterance_type,
            t_start: t,
            t_end: t,
            text: text.into(),
            emotion,
            importance: quantize(importance.clamp(0.0, 1.0)),
            level: 0,
            pinned: false,
            source_ids: BTreeSet::new(),
            covered_count: 1,
        }
    }

    /// Local structural invariants (those checkable without constituents).
    pub fn check(&self) -> Result<(), String> {
        if self.t_start > self.t_end {
            return Err(format!("entry {}: t_start > t_end", self.id));
        }
        if !(0.0..=1.0).contains(&self.importance) {
            return Err(format!("entry {}: importance out of range", self.id));
        }
        match self.kind {
            EntryKind::Raw => {
                if self.t_start != self.t_end
                    || self.level != 0
                    || !self.source_ids.is_empty()
                    || self.covered_count != 1
                {
                    return Err(format!("entry {}: raw entry has composite fields", self.id));
                }
            }
            EntryKind::Summary | EntryKind::Meta => {
                if self.source_ids.is_empty() || self.covered_count == 0 {
                    return Err(format!("entry {}: composite entry without sources", self.id));
                }
            }
        }
        if self.emotion.label != classify_quadrant(self.emotion.valence, self.emotion.arousal) {
            return Err(format!("entry {}: label disagrees with quadrant rule", self.id));
        }
        Ok(())
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.put_display("covered_count", self.covered_count)
            .put_real("emotion.arousal", self.emotion.arousal)
            .put_real("emotion.confidence", self.emotion.confidence)
            .put_display("emotion.label", self.emotion.label)
            .put_real("emotion.valence", self.emotion.valence)
            .put_display("id", self.id)
            .put_real("importance", self.importance)
            .put_display("kind", self.kind)
            .put_display("level", self.level)
            .put_bool("pinned", self.pinned)
            .put_list("source_ids", self.source_ids.iter())
            .put_display("t_end", self.t_end)
            .put_display("t_start", self.t_start)
            .put("text", self.text.as_str())
            .put("user_id", self.user_id.as_str())
            .put_display("utterance_type", self.utterance_type);
        r
    }

    pub fn from_record(r: &Record) -> Result<Self, RecordError> {
        let bad = |key: &str| RecordError::BadValue {
            key: key.to_string(),
            value: r.opt(key).unwrap_or_default().to_string(),
        };
        let valence = r.real("emotion.valence")?;
        let arousal = r.real("emotion.arousal")?;
        let label: EmotionLabel = r.parse("emotion.label")?;
        if label != classify_quadrant(valence, arousal) {
            return Err(bad("emotion.label"));
        }
        let entry = Self {
            id: r.parse("id")?,
            user_id: r.get("user_id")?.to_string(),
            kind: r.parse("kind")?,
            utterance_type: r.parse("utterance_type")?,
            t_start: r.parse("t_start")?,
            t_end: r.parse("t_end")?,
            text: r.get("text")?.to_string(),
            emotion: EmotionState {
                valence,
                arousal,
                label,
                confidence: r.real("emotion.confidence")?,
            },
            importance: r.real("importance")?,
            level: r.parse("level")?,
            pinned: r.boolean("pinned")?,
            source_ids: r.list::<EntryId>("source_ids")?.into_iter().collect(),
            covered_count: r.parse("covered_count")?,
        };
        entry
            .check()
            .map_err(RecordError::Malformed)?;
        Ok(entry)
    }

    pub fn encode(&self) -> String {
        self.to_record().encode()
    }

    pub fn decode(line: &str) -> Result<Self, RecordError> {
        Self::from_record(&Record::decode(line)?)
    }

    /// Age measured from the newest moment the entry covers.
    pub fn age(&self, now: Timestamp) -> Seconds {
        now - self.t_end
    }
}

/// Canonical byte encoding of an entry.
pub fn canonical_serialize(entry: &MemoryEntry) -> Vec<u8> {
    entry.encode().into_bytes()
}

/// Size of an entry as counted by store byte accounting.
pub fn entry_bytes(entry: &MemoryEntry) -> u64 {
    entry.encode().len() as u64
}
