//! Append-only journal of state mutations.
//!
//! The file starts with the header line [`JOURNAL_HEADER`]. Each following
//! line is one record: `|`-separated canonical records (an op header, then
//! any entry payloads), then `#` and a 16-digit hex checksum of everything
//! before the `#`. Only newline-terminated lines with a valid checksum count
//! as written; a damaged final line is treated as a torn write.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::emotion::UserBaseline;
use crate::engagement::PropensityWeight;
use crate::error::EngineError;
use crate::hash::stable_hash;
use crate::model::{EntryId, MemoryEntry, Timestamp};
use crate::record::{Record, RecordError};

pub const JOURNAL_HEADER: &str = "recollect-journal v1";
const CHECKSUM_SEED: u64 = 0x6a6f_7572_6e61_6c31;

#[derive(Debug, Clone, PartialEq)]
pub enum JournalOp {
    Ingest {
        entry: MemoryEntry,
    },
    /// One whole compaction pass; summaries apply in order.
    Merge {
        summaries: Vec<MemoryEntry>,
    },
    Prune {
        user_id: String,
        tau: f64,
        pruned: Vec<EntryId>,
        metas: Vec<MemoryEntry>,
    },
    Pin {
        entry: MemoryEntry,
    },
    Unpin {
        entry: MemoryEntry,
    },
    Correct {
        entry: MemoryEntry,
    },
    BaselineUpdate {
        baseline: UserBaseline,
    },
    FeedbackWeight {
        weight: PropensityWeight,
    },
    CheckIn {
        user_id: String,
        at: Timestamp,
    },
}

impl JournalOp {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ingest { .. } => "ingest",
            Self::Merge { .. } => "merge",
            Self::Prune { .. } => "prune",
            Self::Pin { .. } => "pin",
            Self::Unpin { .. } => "unpin",
            Self::Correct { .. } => "correct",
            Self::BaselineUpdate { .. } => "baseline",
            Self::FeedbackWeight { .. } => "feedback_weight",
            Self::CheckIn { .. } => "checkin",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JournalRecord {
    pub seq: u64,
    pub t: Timestamp,
    pub op: JournalOp,
}

fn checksum(body: &str) -> String {
    format!("{:016x}", stable_hash(CHECKSUM_SEED, body.as_bytes()))
}

impl JournalRecord {
    /// One journal line without the trailing newline.
    pub fn encode(&self) -> String {
        let mut head = Record::new();
        head.put("op", self.op.name())
            .put_display("seq", self.seq)
            .put_display("t", self.t);
        let mut payload: Vec<&MemoryEntry> = Vec::new();
        match &self.op {
            JournalOp::Ingest { entry }
            | JournalOp::Pin { entry }
            | JournalOp::Unpin { entry }
            | JournalOp::Correct { entry } => payload.push(entry),
            JournalOp::Merge { summaries } => payload.extend(summaries),
            JournalOp::Prune {
                user_id,
                tau,
                pruned,
                metas,
            } => {
                head.put("user", user_id.as_str())
                    .put_real("tau", *tau)
                    .put_list("pruned", pruned.iter());
                payload.extend(metas);
            }
            JournalOp::BaselineUpdate { baseline } => {
                head.put("user", baseline.user_id.as_str())
                    .put_exact("mean_valence", baseline.mean_valence)
                    .put_exact("mean_arousal", baseline.mean_arousal)
                    .put_display("sample_count", baseline.sample_count);
            }
            JournalOp::FeedbackWeight { weight } => {
                head.put("user", weight.user_id.as_str())
                    .put_exact("weight", weight.weight);
            }
            JournalOp::CheckIn { user_id, at } => {
                head.put("user", user_id.as_str()).put_display("at", at);
            }
        }
        let mut body = head.encode();
        for e in payload {
            body.push('|');
            body.push_str(&e.encode());
        }
        let sum = checksum(&body);
        body.push('#');
        body.push_str(&sum);
        body
    }

    pub fn decode(line: &str) -> Result<Self, RecordError> {
        let (body, sum) = line
            .rsplit_once('#')
            .ok_or_else(|| RecordError::Malformed("missing checksum".into()))?;
        if checksum(body) != sum {
            return Err(RecordError::Malformed("checksum mismatch".into()));
        }
        let mut parts = body.split('|');
        let head = Record::decode(parts.next().unwrap_or_default())?;
        let entries = parts
            .map(MemoryEntry::decode)
            .collect::<Result<Vec<_>, _>>()?;
        let op_name = head.get("op")?;
        let single = |mut entries: Vec<MemoryEntry>| -> Result<MemoryEntry, RecordError> {
            match entries.len() {
                1 => Ok(entries.pop().expect("one entry")),
                n => Err(RecordError::Malformed(format!("{op_name}: expected 1 entry, got {n}"))),
            }
        };
        let none = |entries: &[MemoryEntry]| {
            if entries.is_empty() {
                Ok(())
            } else {
                Err(RecordError::Malformed(format!("{op_name}: unexpected payload")))
            }
        };
        let op = match op_name {
            "ingest" => JournalOp::Ingest {
                entry: single(entries)?,
            },
            "pin" => JournalOp::Pin {
                entry: single(entries)?,
            },
            "unpin" => JournalOp::Unpin {
                entry: single(entries)?,
            },
            "correct" => JournalOp::Correct {
                entry: single(entries)?,
            },
            "merge" => {
                if entries.is_empty() {
                    return Err(RecordError::Malformed("merge without summaries".into()));
                }
                JournalOp::Merge { summaries: entries }
            }
            "prune" => JournalOp::Prune {
                user_id: head.get("user")?.to_string(),
                tau: head.real("tau")?,
                pruned: head.list("pruned")?,
                metas: entries,
            },
            "baseline" => {
                none(&entries)?;
                JournalOp::BaselineUpdate {
                    baseline: UserBaseline {
                        user_id: head.get("user")?.to_string(),
                        mean_valence: head.exact("mean_valence")?,
                        mean_arousal: head.exact("mean_arousal")?,
                        sample_count: head.parse("sample_count")?,
                    },
                }
            }
            "feedback_weight" => {
                none(&entries)?;
                JournalOp::FeedbackWeight {
                    weight: PropensityWeight {
                        user_id: head.get("user")?.to_string(),
                        weight: head.exact("weight")?,
                    },
                }
            }
            "checkin" => {
                none(&entries)?;
                JournalOp::CheckIn {
                    user_id: head.get("user")?.to_string(),
                    at: head.parse("at")?,
                }
            }
            other => return Err(RecordError::Malformed(format!("unknown op {other:?}"))),
        };
        Ok(Self {
            seq: head.parse("seq")?,
            t: head.parse("t")?,
            op,
        })
    }
}

/// Parsed journal contents.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JournalContents {
    pub records: Vec<JournalRecord>,
    /// Byte length of the valid prefix (header plus complete records).
    pub valid_len: u64,
    /// Whether a torn final record was dropped.
    pub truncated_tail: bool,
}

/// Parse journal text. A damaged or unterminated final line is dropped;
/// damage anywhere else is fatal and names the sequence number expected at
/// that point.
pub fn parse_journal(text: &str) -> Result<JournalContents, EngineError> {
    let mut out = JournalContents::default();
    if text.is_empty() {
        return Ok(out);
    }
    let Some(header_end) = text.find('\n') else {
        // a torn header: nothing was ever committed
        out.truncated_tail = true;
        return Ok(out);
    };
    if &text[..header_end] != JOURNAL_HEADER {
        return Err(EngineError::Format(format!(
            "unexpected journal header {:?}",
            &text[..header_end]
        )));
    }
    let mut pos = header_end + 1;
    out.valid_len = pos as u64;
    let mut prev_seq: Option<u64> = None;
    while pos < text.len() {
        let rest = &text[pos..];
        let (line, terminated) = match rest.find('\n') {
            Some(i) => (&rest[..i], true),
            None => (rest, false),
        };
        let next_pos = pos + line.len() + usize::from(terminated);
        let is_last = next_pos >= text.len();
        let expected = prev_seq.map_or(1, |s| s + 1);
        let parsed = if terminated {
            JournalRecord::decode(line)
        } else {
            Err(RecordError::Malformed("unterminated record".into()))
        };
        match parsed {
            Ok(rec) => {
                if let Some(p) = prev_seq {
                    if rec.seq <= p {
                        return Err(EngineError::Corrupt {
                            seq: expected,
                            msg: format!("sequence went from {p} to {}", rec.seq),
                        });
                    }
                }
                prev_seq = Some(rec.seq);
                out.records.push(rec);
                out.valid_len = next_pos as u64;
            }
            Err(_) if is_last => {
                out.truncated_tail = true;
                break;
            }
            Err(e) => {
                return Err(EngineError::Corrupt {
                    seq: expected,
                    msg: e.to_string(),
                })
            }
        }
        pos = next_pos;
    }
    Ok(out)
}

pub fn read_journal(path: &Path) -> Result<JournalContents, EngineError> {
    match std::fs::read(path) {
        Ok(bytes) => {
            let text = String::from_utf8_lossy(&bytes);
            parse_journal(&text)
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(JournalContents::default()),
        Err(e) => Err(e.into()),
    }
}

/// Appends records to a journal file.
#[derive(Debug)]
pub struct JournalWriter {
    file: File,
    path: PathBuf,
    sync: bool,
}

impl JournalWriter {
    /// Start a fresh journal, replacing any existing file.
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut file = File::create(path)?;
        writeln!(file, "{JOURNAL_HEADER}")?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            sync: false,
        })
    }

    /// Reopen for appending after recovery, cutting the file back to its
    /// valid prefix.
    pub fn open_append(path: &Path, valid_len: u64) -> io::Result<Self> {
        if valid_len == 0 {
            return Self::create(path);
        }
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(valid_len)?;
        let mut file = OpenOptions::new().append(true).open(path)?;
        file.flush()?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
            sync: false,
        })
    }

    /// fsync after every record.
    pub fn with_sync(mut self, sync: bool) -> Self {
        self.sync = sync;
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &JournalRecord) -> io::Result<()> {
        let mut line = record.encode();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}
