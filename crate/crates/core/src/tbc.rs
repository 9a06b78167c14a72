//! Temporal compaction: entries are bucketed into geometric age levels and
//! merged pairwise into summaries, which merge again at higher levels.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::config::EpochConfig;
use crate::model::{
    entry_bytes, EmotionState, EntryId, EntryKind, MemoryEntry, Seconds, Timestamp,
};
use crate::record::quantize;
use crate::summarize::{truncate_chars, SummarizeError, Summarizer};

#[derive(Debug, Error, PartialEq)]
pub enum TbcError {
    #[error("negative age {0}s")]
    NegativeAge(Seconds),
}

/// Level an entry of the given age is eligible for: `⌊log_b(age/d0)⌋`
/// clamped to `[0, max_level]`.
pub fn level_for_age(age: Seconds, epoch: &EpochConfig) -> Result<u32, TbcError> {
    if age < 0 {
        return Err(TbcError::NegativeAge(age));
    }
    let ratio = age as f64 / epoch.base_duration as f64;
    if ratio < epoch.growth_factor {
        return Ok(0);
    }
    let max = i64::from(epoch.max_level);
    let mut level = ((ratio.ln() / epoch.growth_factor.ln()).floor() as i64).clamp(0, max);
    // the logarithm can land one off near boundaries
    while level > 0 && epoch.boundary(level as u32) > age as f64 {
        level -= 1;
    }
    while level < max && epoch.boundary(level as u32 + 1) <= age as f64 {
        level += 1;
    }
    Ok(level as u32)
}

/// Outcome of one compaction pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompactionReport {
    pub pass_time: Timestamp,
    pub merges: Vec<(EntryId, Vec<EntryId>)>,
    pub entries_before: usize,
    pub entries_after: usize,
    pub bytes_before: u64,
    pub bytes_after: u64,
}

/// A planned pass: every summary in creation order plus the report. A later
/// summary may consume an earlier one from the same pass, so applying the
/// summaries in order (each replacing its sources) yields the final set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompactionPlan {
    pub summaries: Vec<MemoryEntry>,
    pub report: CompactionReport,
}

impl CompactionPlan {
    pub fn consumed_ids(&self) -> BTreeSet<EntryId> {
        self.summaries
            .iter()
            .flat_map(|s| s.source_ids.iter().copied())
            .collect()
    }
}

/// Merge constituents into one composite entry. Importance is the max of
/// the constituents; affect is their importance-weighted mean, relabeled.
pub fn combine(
    id: EntryId,
    kind: EntryKind,
    level: u32,
    parts: &[&MemoryEntry],
    text: String,
) -> MemoryEntry {
    debug_assert!(!parts.is_empty());
    let first = parts
        .iter()
        .min_by_key(|e| (e.t_start, e.id))
        .expect("at least one constituent");
    let total_w: f64 = parts.iter().map(|e| e.importance).sum();
    let weight = |e: &MemoryEntry| {
        if total_w > 0.0 {
            e.importance / total_w
        } else {
            1.0 / parts.len() as f64
        }
    };
    let mean = |f: fn(&MemoryEntry) -> f64| parts.iter().map(|e| weight(e) * f(e)).sum::<f64>();
    MemoryEntry {
        id,
        user_id: first.user_id.clone(),
        kind,
        utterance_type: first.utterance_type,
        t_start: parts.iter().map(|e| e.t_start).min().unwrap_or_default(),
        t_end: parts.iter().map(|e| e.t_end).max().unwrap_or_default(),
        text,
        emotion: EmotionState::new(
            mean(|e| e.emotion.valence),
            mean(|e| e.emotion.arousal),
            mean(|e| e.emotion.confidence),
        ),
        importance: quantize(parts.iter().map(|e| e.importance).fold(0.0, f64::max)),
        level,
        pinned: false,
        source_ids: parts.iter().map(|e| e.id).collect(),
        covered_count: parts.iter().map(|e| e.covered_count).sum(),
    }
}

/// Plan a compaction pass over a live set.
///
/// For each user and each level `L` below `max_level`, unpinned entries at
/// level `L` whose age makes them eligible for a higher level are sorted by
/// `t_start` and merged in consecutive pairs into level `L+1` summaries; an
/// odd leftover waits for the next pass. Levels are processed bottom-up, so
/// a summary created at `L+1` can merge again within the same pass, which
/// makes a repeated pass at the same `now` a no-op.
///
/// Nothing is applied here; a summarizer failure leaves no partial result.
pub fn compact_pass(
    live: &[&MemoryEntry],
    now: Timestamp,
    epoch: &EpochConfig,
    cap: usize,
    summarizer: &dyn Summarizer,
    next_id: &mut u64,
) -> Result<CompactionPlan, SummarizeError> {
    let bytes_before: u64 = live.iter().map(|e| entry_bytes(e)).sum();
    let originals: BTreeSet<EntryId> = live.iter().map(|e| e.id).collect();
    let mut by_user: BTreeMap<&str, Vec<MemoryEntry>> = BTreeMap::new();
    for e in live.iter().filter(|e| !e.pinned) {
        by_user.entry(&e.user_id).or_default().push((*e).clone());
    }

    let mut plan = CompactionPlan::default();
    let mut removed_bytes = 0u64;
    let mut added_bytes = 0u64;
    let mut consumed_original = 0usize;

    for (_, mut working) in by_user {
        for level in 0..epoch.max_level {
            let mut eligible: Vec<usize> = working
                .iter()
                .enumerate()
                .filter(|(_, e)| e.level == level && e.t_end <= now)
                .filter(|(_, e)| level_for_age(e.age(now), epoch).is_ok_and(|l| l > level))
                .map(|(i, _)| i)
                .collect();
            eligible.sort_by_key(|&i| (working[i].t_start, working[i].id));
            if eligible.len() < 2 {
                continue;
            }
            let mut made = Vec::new();
            let mut gone = Vec::new();
            for pair in eligible.chunks_exact(2) {
                let (a, b) = (&working[pair[0]], &working[pair[1]]);
                let text = summarizer.summarize(&[a.text.as_str(), b.text.as_str()], cap)?;
                let id = EntryId(*next_id);
                *next_id += 1;
                let summary = combine(
                    id,
                    EntryKind::Summary,
                    level + 1,
                    &[a, b],
                    truncate_chars(&text, cap),
                );
                plan.report.merges.push((id, vec![a.id, b.id]));
                made.push(summary);
                gone.extend_from_slice(pair);
            }
            gone.sort_unstable();
            for &i in gone.iter().rev() {
                let e = working.swap_remove(i);
                if originals.contains(&e.id) {
                    consumed_original += 1;
                    removed_bytes += entry_bytes(&e);
                } else {
                    // an intermediate summary from a lower level of this pass
                    added_bytes -= entry_bytes(&e);
                }
            }
            for s in &made {
                added_bytes += entry_bytes(s);
            }
            plan.summaries.extend(made.iter().cloned());
            working.extend(made);
        }
    }

    let consumed = plan.consumed_ids();
    let survivors = plan.summaries.iter().filter(|s| !consumed.contains(&s.id)).count();
    plan.report.pass_time = now;
    plan.report.entries_before = live.len();
    plan.report.entries_after = live.len() - consumed_original + survivors;
    plan.report.bytes_before = bytes_before;
    plan.report.bytes_after = bytes_before - removed_bytes + added_bytes;
    Ok(plan)
}
