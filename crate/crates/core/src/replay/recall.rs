use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::ReplayError;
use crate::model::{EntryId, Timestamp};
use crate::record::{Record, RecordError};
use crate::state::EngineState;
use crate::text::{content_tokens, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecallClass {
    /// Referenced again later in the log.
    Important,
    Minor,
}

impl fmt::Display for RecallClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Important => "important",
            Self::Minor => "minor",
        })
    }
}

impl FromStr for RecallClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "important" => Ok(Self::Important),
            "minor" => Ok(Self::Minor),
            other => Err(format!("unknown recall class {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallItem {
    pub user_id: String,
    pub raw: EntryId,
    pub class: RecallClass,
    pub query: String,
    /// The text as originally ingested.
    pub text: String,
    /// When the event is brought up again (important events only).
    pub referenced_at: Option<Timestamp>,
}

impl RecallItem {
    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.put_display("class", self.class)
            .put("query", self.query.as_str())
            .put_display("raw", self.raw)
            .put("text", self.text.as_str())
            .put("user", self.user_id.as_str());
        if let Some(t) = self.referenced_at {
            r.put_display("referenced_at", t);
        }
        r
    }

    pub fn from_record(r: &Record) -> Result<Self, RecordError> {
        Ok(Self {
            user_id: r.get("user")?.to_string(),
            raw: r.parse("raw")?,
            class: r.parse("class")?,
            query: r.get("query")?.to_string(),
            text: r.get("text")?.to_string(),
            referenced_at: r.opt_parse("referenced_at")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecallSpec {
    pub items: Vec<RecallItem>,
}

impl RecallSpec {
    pub fn encode(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&item.to_record().encode());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let item = Record::decode(line)
                .and_then(|r| RecallItem::from_record(&r))
                .map_err(|e| ReplayError::Input {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            items.push(item);
        }
        Ok(Self { items })
    }

    pub fn count(&self, class: RecallClass) -> usize {
        self.items.iter().filter(|i| i.class == class).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallResult {
    /// Hit fraction; NaN when no items of the class exist.
    pub important: f64,
    pub minor: f64,
    pub important_hits: usize,
    pub important_total: usize,
    pub minor_hits: usize,
    pub minor_total: usize,
}

impl RecallResult {
    pub fn is_defined(&self) -> bool {
        !self.important.is_nan() && !self.minor.is_nan()
    }
}

/// Whether the event's query finds it among the top `k` results.
fn recalled(state: &EngineState, item: &RecallItem, k: usize) -> bool {
    let hits = state
        .index()
        .search(Some(&item.user_id), &item.query, k, state.config().retrieval_alpha);
    let wanted = content_tokens(&item.text);
    hits.iter().any(|h| {
        if h.id == item.raw {
            return true;
        }
        if !h.id.is_composite() || !state.members(h.id).is_some_and(|m| m.contains(&item.raw)) {
            return false;
        }
        let text = &state.get(h.id).expect("hit is live").text;
        let have: BTreeSet<String> = tokenize(text).into_iter().collect();
        wanted.iter().any(|t| have.contains(t))
    })
}

pub fn eval_recall(state: &EngineState, spec: &RecallSpec, k: usize) -> Result<RecallResult, ReplayError> {
    let (mut imp, mut imp_n, mut min, mut min_n) = (0, 0, 0, 0);
    for (i, item) in spec.items.iter().enumerate() {
        let owner = state.covering(item.raw).and_then(|id| state.get(id));
        match owner {
            Some(e) if e.user_id == item.user_id => {}
            _ => {
                return Err(ReplayError::Input {
                    line: i + 1,
                    msg: format!("unknown entry {} for user {}", item.raw, item.user_id),
                })
            }
        }
        let ok = recalled(state, item, k);
        match item.class {
            RecallClass::Important => {
                imp_n += 1;
                imp += usize::from(ok);
            }
            RecallClass::Minor => {
                min_n += 1;
                min += usize::from(ok);
            }
        }
    }
    let frac = |h: usize, n: usize| if n == 0 { f64::NAN } else { h as f64 / n as f64 };
    Ok(RecallResult {
        important: frac(imp, imp_n),
        minor: frac(min, min_n),
        important_hits: imp,
        important_total: imp_n,
        minor_hits: min,
        minor_total: min_n,
    })
}
