//! Shared fixtures: small configs, a fixed-valence annotator, a randomized
//! operation mix over a live engine, and brute-force state oracles.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use recollect::dimf::Feedback;
use recollect::emotion::{AnnotatorPlugin, RawAffect, UserBaseline};
use recollect::engagement::{CheckInEvent, EngagementResponse};
use recollect::model::{entry_bytes, EntryId, HOUR};
use recollect::tbc::CompactionReport;
use recollect::{Engine, EngineConfig, EngineState, EpochConfig, MemoryEntry, Timestamp, UtteranceType};

pub const T0: Timestamp = 1_736_121_600;

/// Fast-moving config: hour-scale epochs and watermarks a few entries deep.
pub fn small_config() -> EngineConfig {
    EngineConfig {
        epoch: EpochConfig {
            base_duration: HOUR,
            growth_factor: 2.0,
            max_level: 6,
        },
        high_watermark_bytes: 12_000,
        low_watermark_bytes: 6_000,
        summary_cap_chars: 160,
        ema_halflife: 6 * HOUR,
        checkin_window: 6 * HOUR,
        ..EngineConfig::default()
    }
}

/// Reads valence from a leading `v=<real>` token; anything else is neutral.
/// Baseline calibration is skipped so fixtures control affect exactly.
#[derive(Debug, Default)]
pub struct FixedValence;

fn leading_valence(text: &str) -> f64 {
    text.split_whitespace()
        .next()
        .and_then(|w| w.strip_prefix("v="))
        .and_then(|v| v.parse().ok())
        .unwrap_or(0.0)
}

impl AnnotatorPlugin for FixedValence {
    fn name(&self) -> &str {
        "fixed-valence"
    }

    fn raw_affect(&self, text: &str) -> RawAffect {
        RawAffect {
            valence: leading_valence(text),
            arousal: 0.0,
            confidence: 1.0,
        }
    }

    fn annotate(&self, text: &str, _baseline: &UserBaseline) -> recollect::EmotionState {
        recollect::EmotionState::new(leading_valence(text), 0.0, 1.0)
    }
}

const TOPICS: &[&str] = &[
    "garden", "tomatoes", "grandson", "piano", "doctor", "bus", "library", "soup", "knitting", "church",
    "neighbor", "photos", "letter", "birthday", "walk", "radio", "bridge", "bakery", "station", "rain",
];
const MOODS: &[&str] = &[
    "happy", "glad", "great", "calm", "proud", "fun", "sad", "lonely", "tired", "worried", "upset", "awful",
    "anxious", "miss", "stressed", "scared",
];
const NEGATIVE: &[&str] = &["sad", "lonely", "awful", "depressed", "terrible", "scared"];

fn sentence(rng: &mut ChaCha8Rng, gloomy: bool) -> String {
    let mut words = Vec::new();
    for _ in 0..rng.random_range(3..9) {
        words.push(*TOPICS.choose(rng).unwrap());
    }
    let moods = if gloomy { NEGATIVE } else { MOODS };
    for _ in 0..rng.random_range(0..3) {
        words.push(*moods.choose(rng).unwrap());
    }
    words.shuffle(rng);
    let mut s = words.join(" ");
    s.push('.');
    s
}

/// Everything observed while driving one randomized workload.
#[derive(Debug, Default)]
pub struct WorkloadRun {
    pub ingests: usize,
    pub compactions: Vec<CompactionReport>,
    /// Merge counts of the immediate repeat passes.
    pub repeat_merges: Vec<usize>,
    /// Passes whose reported byte totals disagree with the store.
    pub report_mismatches: usize,
    pub prunes: usize,
    pub feedback: usize,
    pub checkins: Vec<CheckInEvent>,
    /// Coverage problems found after any operation.
    pub coverage_violations: Vec<String>,
    pub final_state: Option<EngineState>,
}

/// Drive `engine` with `ingests` ingests interleaved with compaction,
/// pruning, pin/unpin/correct and engagement responses.
pub fn run_random_workload(seed: u64, ingests: usize, config: EngineConfig) -> WorkloadRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut engine = Engine::in_memory(config).expect("valid config");
    let users: Vec<String> = (0..rng.random_range(2..6)).map(|i| format!("user{i}")).collect();
    let gloomy: Vec<bool> = users.iter().map(|_| rng.random_bool(0.4)).collect();
    let mut run = WorkloadRun::default();
    let mut t = T0;

    while run.ingests < ingests {
        let roll = rng.random_range(0..100);
        match roll {
            0..=69 => {
                t += rng.random_range(0..40 * 60);
                let u = rng.random_range(0..users.len());
                let kind = match rng.random_range(0..20) {
                    0 => UtteranceType::SystemEvent,
                    1..=4 => UtteranceType::CompanionUtterance,
                    _ => UtteranceType::UserUtterance,
                };
                let text = sentence(&mut rng, gloomy[u]);
                let (_, due) = engine.ingest(&users[u], kind, &text, t).expect("ingest");
                run.checkins.extend(due);
                run.ingests += 1;
            }
            70..=81 => {
                let before = engine.state().total_bytes();
                let report = engine.compact(t).expect("compact");
                if report.bytes_before != before || report.bytes_after != engine.state().total_bytes() {
                    run.report_mismatches += 1;
                }
                run.compactions.push(report);
                run.repeat_merges.push(engine.compact(t).expect("repeat compact").merges.len());
            }
            82..=87 => {
                if rng.random_bool(0.5) {
                    let u = &users[rng.random_range(0..users.len())];
                    if !engine.state().user_entries(u).is_empty() {
                        engine.prune_user(u, t).expect("prune");
                        run.prunes += 1;
                    }
                } else {
                    run.prunes += engine.prune_if_needed(t).expect("prune").len();
                }
            }
            88..=95 => {
                let ids: Vec<EntryId> = engine.state().entries().map(|e| e.id).collect();
                if let Some(&id) = ids.choose(&mut rng) {
                    let fb = match rng.random_range(0..10) {
                        0..=4 => Feedback::Pin,
                        5..=7 => Feedback::Unpin,
                        _ => Feedback::Correct(sentence(&mut rng, false)),
                    };
                    engine.apply_feedback(id, fb, t).expect("feedback");
                    run.feedback += 1;
                }
            }
            _ => {
                let u = &users[rng.random_range(0..users.len())];
                let r = [EngagementResponse::Positive, EngagementResponse::Neutral, EngagementResponse::Negative]
                    [rng.random_range(0..3)];
                engine.engagement_feedback(u, r, t).expect("engagement");
            }
        }
        run.coverage_violations
            .extend(coverage_violations(engine.state()).into_iter().map(|v| format!("after op at t={t}: {v}")));
    }
    run.checkins.extend(engine.advance_clock(t + 2 * 86_400).expect("advance"));
    run.final_state = Some(engine.state().clone());
    run
}

/// Raw ids a live entry stands for, expanded through lineage.
pub fn expand(state: &EngineState, id: EntryId, out: &mut Vec<EntryId>) {
    if !id.is_composite() {
        out.push(id);
        return;
    }
    for &s in &state.lineage()[&id] {
        expand(state, s, out);
    }
}

/// Every ingested raw id must be covered by exactly one live entry, and
/// each entry's covered_count must equal its expansion.
pub fn coverage_violations(state: &EngineState) -> Vec<String> {
    let mut count: BTreeMap<EntryId, usize> = BTreeMap::new();
    let mut bad = Vec::new();
    for e in state.entries() {
        let mut raws = Vec::new();
        expand(state, e.id, &mut raws);
        if raws.len() as u64 != e.covered_count {
            bad.push(format!("{} covers {} raws but claims {}", e.id, raws.len(), e.covered_count));
        }
        for r in raws {
            *count.entry(r).or_default() += 1;
        }
    }
    for raw in 1..state.next_raw_id() {
        match count.get(&EntryId(raw)).copied().unwrap_or(0) {
            1 => {}
            n => bad.push(format!("raw {raw} covered {n} times")),
        }
    }
    if let Some((&extra, _)) = count.iter().find(|(id, _)| id.0 >= state.next_raw_id()) {
        bad.push(format!("raw {extra} was never ingested"));
    }
    bad
}

/// Recompute byte accounting by serializing every live entry.
pub fn brute_force_bytes(state: &EngineState) -> (u64, BTreeMap<String, u64>) {
    let mut per_user: BTreeMap<String, u64> = BTreeMap::new();
    for e in state.entries() {
        *per_user.entry(e.user_id.clone()).or_default() += recollect::model::canonical_serialize(e).len() as u64;
    }
    (per_user.values().sum(), per_user)
}

pub fn raw_entry(id: u64, user: &str, t: Timestamp, text: &str, importance: f64) -> MemoryEntry {
    MemoryEntry::raw(
        EntryId(id),
        user,
        UtteranceType::UserUtterance,
        t,
        text,
        recollect::EmotionState::neutral(),
        importance,
    )
}

pub fn total_bytes(entries: &[MemoryEntry]) -> u64 {
    entries.iter().map(entry_bytes).sum()
}
