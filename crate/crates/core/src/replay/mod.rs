//! Replay harness: event logs, synthetic workloads, the replay driver and
//! recall evaluation.

mod driver;
mod recall;
mod workload;

pub use driver::{replay, DayMetrics, ReplayOptions, ReplayOutcome, TraceRow, METRICS_HEADER, TRACE_HEADER};
pub use recall::{eval_recall, RecallClass, RecallItem, RecallResult, RecallSpec};
pub use workload::{generate_workload, Workload, WorkloadParams, DEFAULT_START, DEFAULT_TURNS};

use thiserror::Error;

use crate::dimf::Feedback;
use crate::engagement::EngagementResponse;
use crate::error::EngineError;
use crate::model::{EntryId, Timestamp, UtteranceType};
use crate::record::{Record, RecordError};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {line}: {msg}")]
    Input { line: usize, msg: String },
    #[error("invariant violated at t={t}: {msg}")]
    Invariant { t: Timestamp, msg: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Utterance {
        user_id: String,
        utterance_type: UtteranceType,
        text: String,
        /// A calendar item worth a reminder ahead of time.
        significant: bool,
    },
    /// `entry` is a raw id: the 1-based ordinal of an utterance in the log.
    Feedback { entry: EntryId, feedback: Feedback },
    Engagement {
        user_id: String,
        response: EngagementResponse,
    },
    Query {
        user_id: Option<String>,
        text: String,
        k: usize,
        expected: Vec<EntryId>,
    },
    Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayEvent {
    pub t: Timestamp,
    pub kind: EventKind,
}

impl ReplayEvent {
    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.put_display("t", self.t);
        match &self.kind {
            EventKind::Utterance {
                user_id,
                utterance_type,
                text,
                significant,
            } => {
                r.put("kind", "utterance")
                    .put("user", user_id.as_str())
                    .put_display("type", utterance_type)
                    .put("text", text.as_str());
                if *significant {
                    r.put_bool("significant", true);
                }
            }
            EventKind::Feedback { entry, feedback } => {
                r.put("kind", "feedback").put_display("ref", entry);
                match feedback {
                    Feedback::Pin => r.put("action", "pin"),
                    Feedback::Unpin => r.put("action", "unpin"),
                    Feedback::Correct(text) => r.put("action", "correct").put("text", text.as_str()),
                };
            }
            EventKind::Engagement { user_id, response } => {
                r.put("kind", "engagement")
                    .put("user", user_id.as_str())
                    .put_display("response", response);
            }
            EventKind::Query {
                user_id,
                text,
                k,
                expected,
            } => {
                r.put("kind", "query").put("text", text.as_str()).put_display("k", k);
                if let Some(u) = user_id {
                    r.put("user", u.as_str());
                }
                if !expected.is_empty() {
                    r.put_list("expected", expected);
                }
            }
            EventKind::Tick => {
                r.put("kind", "tick");
            }
        }
        r
    }

    pub fn encode(&self) -> String {
        self.to_record().encode()
    }

    pub fn from_record(r: &Record) -> Result<Self, RecordError> {
        let t = r.parse("t")?;
        let bad = |key: &str, value: &str| RecordError::BadValue {
            key: key.into(),
            value: value.into(),
        };
        let kind = match r.get("kind")? {
            "utterance" => EventKind::Utterance {
                user_id: r.get("user")?.to_string(),
                utterance_type: r.parse("type")?,
                text: r.get("text")?.to_string(),
                significant: match r.opt("significant") {
                    None => false,
                    Some(_) => r.boolean("significant")?,
                },
            },
            "feedback" => EventKind::Feedback {
                entry: r.parse("ref")?,
                feedback: match r.get("action")? {
                    "pin" => Feedback::Pin,
                    "unpin" => Feedback::Unpin,
                    "correct" => Feedback::Correct(r.get("text")?.to_string()),
                    other => return Err(bad("action", other)),
                },
            },
            "engagement" => EventKind::Engagement {
                user_id: r.get("user")?.to_string(),
                response: r.parse("response")?,
            },
            "query" => {
                let k: usize = r.parse("k")?;
                if k == 0 {
                    return Err(bad("k", "0"));
                }
                EventKind::Query {
                    user_id: r.opt("user").map(str::to_string),
                    text: r.get("text")?.to_string(),
                    k,
                    expected: match r.opt("expected") {
                        None => Vec::new(),
                        Some(_) => r.list("expected")?,
                    },
                }
            }
            "tick" => EventKind::Tick,
            other => return Err(bad("kind", other)),
        };
        Ok(Self { t, kind })
    }

    pub fn decode(line: &str) -> Result<Self, RecordError> {
        Self::from_record(&Record::decode(line)?)
    }
}

/// One event per line, each followed by a newline.
pub fn encode_log(events: &[ReplayEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.encode());
        out.push('\n');
    }
    out
}

/// Parse a log, rejecting malformed lines and decreasing timestamps.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_log(text: &str) -> Result<Vec<ReplayEvent>, ReplayError> {
    let mut events: Vec<ReplayEvent> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let line_no = i + 1;
        let ev = ReplayEvent::decode(line).map_err(|e| ReplayError::Input {
            line: line_no,
            msg: e.to_string(),
        })?;
        if let Some(prev) = events.last() {
            if ev.t < prev.t {
                return Err(ReplayError::Input {
                    line: line_no,
                    msg: format!("timestamp {} precedes {}", ev.t, prev.t),
                });
            }
        }
        events.push(ev);
    }
    Ok(events)
}
