//! Drives an engine through a log on a simulated clock.
//!
//! Scheduled work runs whenever the next event's time reaches it, in this
//! order at equal times: due reminders, then the periodic pass (check-ins,
//! compaction, watermark check), then the daily metrics row.

use std::path::PathBuf;

use super::{EventKind, ReplayError, ReplayEvent};
use crate::config::EngineConfig;
use crate::engagement::CheckInEvent;
use crate::engine::Engine;
use crate::model::{entry_bytes, Timestamp, DAY};
use crate::record::format_real;

pub const METRICS_HEADER: &[&str] = &[
    "day",
    "t",
    "entries_live",
    "bytes_live",
    "bytes_baseline",
    "merges",
    "prunes",
    "checkins",
];
pub const TRACE_HEADER: &[&str] = &["t", "kind", "user", "detail"];

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    /// Run compaction and pruning; off gives the uncompressed curve.
    pub compression: bool,
    /// Recheck store invariants after every pass.
    pub check_invariants: bool,
    pub journal: Option<PathBuf>,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self {
            compression: true,
            check_invariants: true,
            journal: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayMetrics {
    pub day: i64,
    pub t: Timestamp,
    pub entries_live: usize,
    pub bytes_live: u64,
    /// What the store would hold with nothing compacted or pruned.
    pub bytes_baseline: u64,
    pub merges: usize,
    pub prunes: usize,
    pub checkins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: Timestamp,
    pub kind: &'static str,
    pub user: String,
    pub detail: String,
}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub engine: Engine,
    pub metrics: Vec<DayMetrics>,
    pub trace: Vec<TraceRow>,
    pub bytes_baseline: u64,
}

impl ReplayOutcome {
    pub fn metrics_csv(&self) -> Result<String, ReplayError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(METRICS_HEADER)?;
        for m in &self.metrics {
            w.write_record([
                m.day.to_string(),
                m.t.to_string(),
                m.entries_live.to_string(),
                m.bytes_live.to_string(),
                m.bytes_baseline.to_string(),
                m.merges.to_string(),
                m.prunes.to_string(),
                m.checkins.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn trace_csv(&self) -> Result<String, ReplayError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TRACE_HEADER)?;
        for r in &self.trace {
            w.write_record([r.t.to_string(), r.kind.to_string(), r.user.clone(), r.detail.clone()])?;
        }
        finish(w)
    }

    pub fn final_ratio(&self) -> f64 {
        match self.metrics.last() {
            Some(m) if m.bytes_baseline > 0 => m.bytes_live as f64 / m.bytes_baseline as f64,
            _ => f64::NAN,
        }
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, ReplayError> {
    let bytes = w.into_inner().map_err(|e| ReplayError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

struct Driver {
    engine: Engine,
    options: ReplayOptions,
    origin: Timestamp,
    next_pass: Timestamp,
    next_row: Timestamp,
    reminders: Vec<(Timestamp, String, String)>,
    next_reminder: usize,
    baseline: u64,
    /// Bytes added by feedback edits (corrections can lengthen an entry).
    feedback_growth: u64,
    counters: (usize, usize, usize),
    metrics: Vec<DayMetrics>,
    trace: Vec<TraceRow>,
}

impl Driver {
    fn checkin_rows(&mut self, events: Vec<CheckInEvent>) {
        for ev in events {
            self.counters.2 += 1;
            self.trace.push(TraceRow {
                t: ev.t,
                kind: "checkin",
                user: ev.user_id,
                detail: format!("reason={};ema_valence={}", ev.reason.as_str(), format_real(ev.ema_valence)),
            });
        }
    }

    fn check(&self, t: Timestamp) -> Result<(), ReplayError> {
        if !self.options.check_invariants {
            return Ok(());
        }
        let state = self.engine.state();
        state
            .check_invariants(false)
            .map_err(|msg| ReplayError::Invariant { t, msg })?;
        if self.options.compression && state.total_bytes() > self.baseline + self.feedback_growth {
            return Err(ReplayError::Invariant {
                t,
                msg: format!(
                    "live bytes {} exceed baseline {} plus feedback growth {}",
                    state.total_bytes(),
                    self.baseline,
                    self.feedback_growth
                ),
            });
        }
        Ok(())
    }

    fn pass(&mut self, t: Timestamp) -> Result<(), ReplayError> {
        let due = self.engine.advance_clock(t)?;
        self.checkin_rows(due);
        if self.options.compression {
            let report = self.engine.compact(t)?;
            if report.bytes_after > report.bytes_before {
                return Err(ReplayError::Invariant {
                    t,
                    msg: format!("compaction grew the store: {} -> {}", report.bytes_before, report.bytes_after),
                });
            }
            self.counters.0 += report.merges.len();
            for p in self.engine.prune_if_needed(t)? {
                if p.pruned_ids.is_empty() {
                    continue;
                }
                self.counters.1 += 1;
                self.trace.push(TraceRow {
                    t,
                    kind: "prune",
                    user: p.user_id.clone(),
                    detail: format!(
                        "tau={};pruned={};metas={};bytes_after={};warning={}",
                        format_real(p.threshold_tau),
                        p.pruned_ids.len(),
                        p.meta_ids_created.len(),
                        p.bytes_after,
                        p.warning
                    ),
                });
            }
        }
        self.check(t)
    }

    fn row(&mut self, t: Timestamp) {
        let state = self.engine.state();
        let (merges, prunes, checkins) = std::mem::take(&mut self.counters);
        self.metrics.push(DayMetrics {
            day: (t - self.origin) / DAY,
            t,
            entries_live: state.len(),
            bytes_live: state.total_bytes(),
            bytes_baseline: self.baseline,
            merges,
            prunes,
            checkins,
        });
    }

    /// Run all scheduled work due at or before `t`.
    fn run_until(&mut self, t: Timestamp) -> Result<(), ReplayError> {
        let period = self.engine.config().compaction_period;
        loop {
            let reminder = self.reminders.get(self.next_reminder).map(|r| r.0);
            let next = reminder.unwrap_or(Timestamp::MAX).min(self.next_pass).min(self.next_row);
            if next > t {
                return Ok(());
            }
            if reminder == Some(next) {
                let (due, user, text) = self.reminders[self.next_reminder].clone();
                self.next_reminder += 1;
                self.trace.push(TraceRow {
                    t: due,
                    kind: "reminder",
                    user,
                    detail: text,
                });
            } else if self.next_pass == next {
                self.pass(next)?;
                self.next_pass += period;
            } else {
                self.row(next);
                self.next_row += DAY;
            }
        }
    }
}

/// Replay a parsed log under `config`.
pub fn replay(events: &[ReplayEvent], config: EngineConfig, options: &ReplayOptions) -> Result<ReplayOutcome, ReplayError> {
    let engine = match &options.journal {
        Some(p) => Engine::create(config, p)?,
        None => Engine::in_memory(config)?,
    };
    let origin = events.first().map_or(0, |e| e.t - e.t.rem_euclid(DAY));
    let lead = engine.config().reminder_lead;
    let mut reminders: Vec<(Timestamp, String, String)> = events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Utterance {
                user_id,
                text,
                significant: true,
                ..
            } => Some((e.t - lead, user_id.clone(), text.clone())),
            _ => None,
        })
        .collect();
    reminders.sort();
    let period = engine.config().compaction_period;
    let mut d = Driver {
        engine,
        options: options.clone(),
        origin,
        next_pass: origin + period,
        next_row: origin + DAY,
        reminders,
        next_reminder: 0,
        baseline: 0,
        feedback_growth: 0,
        counters: (0, 0, 0),
        metrics: Vec::new(),
        trace: Vec::new(),
    };

    for (i, ev) in events.iter().enumerate() {
        let line = i + 1;
        let input = |msg: String| ReplayError::Input { line, msg };
        d.run_until(ev.t)?;
        match &ev.kind {
            EventKind::Utterance {
                user_id,
                utterance_type,
                text,
                ..
            } => {
                let (entry, due) = match d.engine.ingest(user_id, *utterance_type, text, ev.t) {
                    Err(e @ crate::EngineError::Clock { .. }) => return Err(input(e.to_string())),
                    other => other?,
                };
                d.checkin_rows(due);
                d.baseline += entry_bytes(&entry);
            }
            EventKind::Feedback { entry, feedback } => {
                let target = d
                    .engine
                    .resolve(*entry)
                    .ok_or_else(|| input(format!("feedback for unknown entry {entry}")))?;
                let before = d.engine.state().get(target).map_or(0, entry_bytes);
                let after = entry_bytes(&d.engine.apply_feedback(target, feedback.clone(), ev.t)?);
                d.feedback_growth += after.saturating_sub(before);
            }
            EventKind::Engagement { user_id, response } => {
                let w = d.engine.engagement_feedback(user_id, *response, ev.t)?;
                d.trace.push(TraceRow {
                    t: ev.t,
                    kind: "engagement",
                    user: user_id.clone(),
                    detail: format!("response={response};weight={}", format_real(w)),
                });
            }
            EventKind::Query {
                user_id,
                text,
                k,
                expected,
            } => {
                let hits = d.engine.search(user_id.as_deref(), text, *k);
                let ids: Vec<String> = hits.iter().map(|h| h.id.to_string()).collect();
                let mut detail = format!("hits={}", ids.join(" "));
                if !expected.is_empty() {
                    let found = expected.iter().all(|x| {
                        let live = d.engine.resolve(*x);
                        hits.iter().any(|h| Some(h.id) == live)
                    });
                    detail.push_str(&format!(";found={found}"));
                }
                d.trace.push(TraceRow {
                    t: ev.t,
                    kind: "query",
                    user: user_id.clone().unwrap_or_default(),
                    detail,
                });
            }
            EventKind::Tick => {}
        }
    }
    if options.check_invariants {
        let t = d.engine.state().clock().unwrap_or(origin);
        d.engine
            .state()
            .check_invariants(true)
            .map_err(|msg| ReplayError::Invariant { t, msg })?;
    }
    Ok(ReplayOutcome {
        engine: d.engine,
        metrics: d.metrics,
        trace: d.trace,
        bytes_baseline: d.baseline,
    })
}
