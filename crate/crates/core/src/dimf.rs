//! Importance filtering: when a user's store crosses the high watermark,
//! entries below a dynamically chosen importance threshold are pruned and
//! replaced by one meta entry per calendar week.

use std::collections::BTreeMap;

use crate::config::{EngineConfig, ImportanceWeights};
use crate::importance::rescore_feedback;
use crate::model::{entry_bytes, EntryId, EntryKind, MemoryEntry, Timestamp, DAY, WEEK};
use crate::summarize::{truncate_chars, SummarizeError, Summarizer};
use crate::tbc::combine;

pub fn should_activate(store_bytes: u64, config: &EngineConfig) -> bool {
    store_bytes >= config.high_watermark_bytes
}

/// Monday-aligned week number (the Unix epoch fell on a Thursday).
pub fn week_of(t: Timestamp) -> i64 {
    (t + 3 * DAY).div_euclid(WEEK)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    pub user_id: String,
    pub trigger_bytes: u64,
    pub threshold_tau: f64,
    pub pruned_ids: Vec<EntryId>,
    pub meta_ids_created: Vec<EntryId>,
    pub bytes_after: u64,
    /// Set when the low watermark could not be reached.
    pub warning: bool,
}

/// Result of pruning one user's entries at a fixed threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunePlan {
    pub tau: f64,
    /// Pruned ids ordered by importance, then age (oldest first).
    pub pruned: Vec<EntryId>,
    pub metas: Vec<MemoryEntry>,
    pub bytes_before: u64,
    pub bytes_after: u64,
}

/// Prune every unpinned entry with importance strictly below `tau`.
///
/// `entries` must all belong to one user. Meta ids are allocated from
/// `next_id` in week order.
pub fn plan_at_threshold(
    entries: &[&MemoryEntry],
    tau: f64,
    cap: usize,
    summarizer: &dyn Summarizer,
    next_id: u64,
) -> Result<PrunePlan, SummarizeError> {
    let bytes_before: u64 = entries.iter().map(|e| entry_bytes(e)).sum();
    let mut doomed: Vec<&MemoryEntry> = entries
        .iter()
        .copied()
        .filter(|e| !e.pinned && e.importance < tau)
        .collect();
    doomed.sort_by(|a, b| {
        a.importance
            .total_cmp(&b.importance)
            .then(a.t_start.cmp(&b.t_start))
            .then(a.id.cmp(&b.id))
    });

    let mut weeks: BTreeMap<i64, Vec<&MemoryEntry>> = BTreeMap::new();
    for e in &doomed {
        weeks.entry(week_of(e.t_start)).or_default().push(e);
    }
    let mut metas = Vec::with_capacity(weeks.len());
    for (id, mut group) in (next_id..).zip(weeks.into_values()) {
        group.sort_by_key(|e| (e.t_start, e.id));
        let texts: Vec<&str> = group.iter().map(|e| e.text.as_str()).collect();
        let text = truncate_chars(&summarizer.summarize(&texts, cap)?, cap);
        let level = group.iter().map(|e| e.level).max().unwrap_or(0);
        metas.push(combine(EntryId(id), EntryKind::Meta, level, &group, text));
    }

    let removed: u64 = doomed.iter().map(|e| entry_bytes(e)).sum();
    let added: u64 = metas.iter().map(entry_bytes).sum();
    Ok(PrunePlan {
        tau,
        pruned: doomed.iter().map(|e| e.id).collect(),
        metas,
        bytes_before,
        bytes_after: bytes_before - removed + added,
    })
}

/// Smallest candidate threshold whose prune brings the user under the low
/// watermark, scanning distinct unpinned importances ascending; `+∞` (prune
/// every unpinned entry) when none does.
pub fn select_threshold(
    entries: &[&MemoryEntry],
    config: &EngineConfig,
    summarizer: &dyn Summarizer,
    next_id: u64,
) -> Result<PrunePlan, SummarizeError> {
    let mut candidates: Vec<f64> = entries
        .iter()
        .filter(|e| !e.pinned)
        .map(|e| e.importance)
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for tau in candidates {
        let plan = plan_at_threshold(entries, tau, config.summary_cap_chars, summarizer, next_id)?;
        if plan.bytes_after <= config.low_watermark_bytes {
            return Ok(plan);
        }
    }
    plan_at_threshold(
        entries,
        f64::INFINITY,
        config.summary_cap_chars,
        summarizer,
        next_id,
    )
}

/// Plan a prune pass for one user's entries and describe it.
pub fn prune_pass(
    entries: &[&MemoryEntry],
    config: &EngineConfig,
    summarizer: &dyn Summarizer,
    next_id: u64,
) -> Result<(PrunePlan, PruneReport), SummarizeError> {
    let plan = select_threshold(entries, config, summarizer, next_id)?;
    let report = PruneReport {
        user_id: entries.first().map(|e| e.user_id.clone()).unwrap_or_default(),
        trigger_bytes: plan.bytes_before,
        threshold_tau: plan.tau,
        pruned_ids: plan.pruned.clone(),
        meta_ids_created: plan.metas.iter().map(|m| m.id).collect(),
        bytes_after: plan.bytes_after,
        warning: plan.bytes_after > config.low_watermark_bytes,
    };
    Ok((plan, report))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    Pin,
    Unpin,
    Correct(String),
}

/// Apply user feedback to an entry.
///
/// Pinning turns the feedback bonus on and re-scores; unpinning reverses
/// it. A correction replaces the text and pins the entry.
pub fn apply_feedback(entry: &MemoryEntry, feedback: &Feedback, w: ImportanceWeights) -> MemoryEntry {
    let mut out = entry.clone();
    let pinned = !matches!(feedback, Feedback::Unpin);
    out.importance = rescore_feedback(entry.importance, w, entry.pinned, pinned);
    out.pinned = pinned;
    if let Feedback::Correct(text) = feedback {
        out.text = text.clone();
    }
    out
}
