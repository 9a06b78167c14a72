//! Snapshot files.
//!
//! ```text
//! recollect-snapshot v1
//! meta <record>              config hash, last_seq, id counters, clock
//! user <record>              one per user, by user id
//! lineage <record>           one per composite ever created, by id
//! entry <record>             one per live entry, by id
//! ```
//!
//! Running statistics (baselines, EMAs, weights) are written losslessly so
//! that a snapshot plus journal tail reproduces full replay bit for bit.

use std::path::Path;

use crate::config::EngineConfig;
use crate::emotion::UserBaseline;
use crate::engagement::{EmotionTrend, PropensityWeight};
use crate::error::EngineError;
use crate::model::{EntryId, MemoryEntry, Timestamp};
use crate::record::Record;
use crate::state::{EngineState, UserState};

pub const SNAPSHOT_HEADER: &str = "recollect-snapshot v1";
pub const FORMAT_VERSION: u32 = 1;

fn user_record(u: &UserState) -> Record {
    let mut r = Record::new();
    let (b, t) = (&u.baseline, &u.trend);
    r.put("user", b.user_id.as_str())
        .put_exact("baseline.mean_arousal", b.mean_arousal)
        .put_exact("baseline.mean_valence", b.mean_valence)
        .put_display("baseline.samples", b.sample_count)
        .put_exact("trend.ema_arousal", t.ema_arousal)
        .put_exact("trend.ema_valence", t.ema_valence)
        .put_exact("weight", u.weight.weight);
    let opts: [(&str, Option<Timestamp>); 4] = [
        ("last_ingest", u.last_ingest),
        ("trend.below_since", t.below_threshold_since),
        ("trend.last_checkin", t.last_checkin),
        ("trend.last_t", t.last_t),
    ];
    for (k, v) in opts {
        if let Some(v) = v {
            r.put_display(k, v);
        }
    }
    r
}

fn parse_user(r: &Record) -> Result<UserState, EngineError> {
    let id = r.get("user")?.to_string();
    Ok(UserState {
        baseline: UserBaseline {
            user_id: id.clone(),
            mean_valence: r.exact("baseline.mean_valence")?,
            mean_arousal: r.exact("baseline.mean_arousal")?,
            sample_count: r.parse("baseline.samples")?,
        },
        weight: PropensityWeight {
            user_id: id.clone(),
            weight: r.exact("weight")?,
        },
        trend: EmotionTrend {
            user_id: id,
            ema_valence: r.exact("trend.ema_valence")?,
            ema_arousal: r.exact("trend.ema_arousal")?,
            last_t: r.opt_parse("trend.last_t")?,
            below_threshold_since: r.opt_parse("trend.below_since")?,
            last_checkin: r.opt_parse("trend.last_checkin")?,
        },
        last_ingest: r.opt_parse("last_ingest")?,
    })
}

/// Canonical snapshot text of a state.
pub fn encode_snapshot(state: &EngineState) -> String {
    let mut out = String::new();
    out.push_str(SNAPSHOT_HEADER);
    out.push('\n');
    let mut meta = Record::new();
    meta.put_display("format_version", FORMAT_VERSION)
        .put("config_hash", format!("{:016x}", state.config.hash()))
        .put_display("last_seq", state.last_seq)
        .put_display("next_composite", state.next_composite)
        .put_display("next_raw", state.next_raw);
    if let Some(c) = state.clock() {
        meta.put_display("clock", c);
    }
    let mut line = |tag: &str, r: &Record| {
        out.push_str(tag);
        out.push(' ');
        out.push_str(&r.encode());
        out.push('\n');
    };
    line("meta", &meta);
    for u in state.users.values() {
        line("user", &user_record(u));
    }
    for (id, sources) in &state.lineage {
        let mut r = Record::new();
        r.put_display("id", id).put_list("sources", sources);
        line("lineage", &r);
    }
    for e in state.entries.values() {
        line("entry", &e.to_record());
    }
    out
}

/// Load a snapshot written under `config`.
pub fn decode_snapshot(text: &str, config: &EngineConfig) -> Result<EngineState, EngineError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, SNAPSHOT_HEADER)) => {}
        other => {
            return Err(EngineError::Format(format!(
                "unexpected snapshot header {:?}",
                other.map(|(_, l)| l)
            )))
        }
    }
    let mut state = EngineState::new(config.clone());
    let mut saw_meta = false;
    for (n, line) in lines {
        let at = |e: EngineError| EngineError::Format(format!("snapshot line {}: {e}", n + 1));
        let (tag, body) = line
            .split_once(' ')
            .ok_or_else(|| EngineError::Format(format!("snapshot line {}: missing tag", n + 1)))?;
        let r = Record::decode(body).map_err(|e| at(e.into()))?;
        match tag {
            "meta" => {
                let version: u32 = r.parse("format_version").map_err(|e| at(e.into()))?;
                if version != FORMAT_VERSION {
                    return Err(EngineError::Format(format!("unsupported snapshot version {version}")));
                }
                let found = u64::from_str_radix(r.get("config_hash").map_err(|e| at(e.into()))?, 16)
                    .map_err(|e| EngineError::Format(format!("config hash: {e}")))?;
                if found != config.hash() {
                    return Err(EngineError::ConfigMismatch {
                        expected: config.hash(),
                        found,
                    });
                }
                let fields = (|| -> Result<_, crate::record::RecordError> {
                    Ok((
                        r.parse("last_seq")?,
                        r.parse("next_raw")?,
                        r.parse("next_composite")?,
                        r.opt_parse::<Timestamp>("clock")?,
                    ))
                })()
                .map_err(|e| at(e.into()))?;
                (state.last_seq, state.next_raw, state.next_composite) = (fields.0, fields.1, fields.2);
                state.clock = fields.3.unwrap_or(Timestamp::MIN);
                saw_meta = true;
            }
            "user" => {
                let u = parse_user(&r).map_err(at)?;
                state.users.insert(u.baseline.user_id.clone(), u);
            }
            "lineage" => {
                let id: EntryId = r.parse("id").map_err(|e| at(e.into()))?;
                let sources: Vec<EntryId> = r.list("sources").map_err(|e| at(e.into()))?;
                state.lineage.insert(id, sources);
            }
            "entry" => {
                let e = MemoryEntry::from_record(&r).map_err(|e| at(e.into()))?;
                state.entries.insert(e.id, e);
            }
            other => return Err(EngineError::Format(format!("snapshot line {}: unknown tag {other:?}", n + 1))),
        }
    }
    if !saw_meta {
        return Err(EngineError::Format("snapshot has no meta line".into()));
    }
    state.rebuild_derived()?;
    Ok(state)
}

pub fn write_snapshot(state: &EngineState, path: &Path) -> Result<(), EngineError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode_snapshot(state))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_snapshot(path: &Path, config: &EngineConfig) -> Result<EngineState, EngineError> {
    let text = std::fs::read_to_string(path)?;
    decode_snapshot(&text, config)
}
