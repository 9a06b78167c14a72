//! The engine's logical state and the deterministic transition function
//! that journal records drive.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::EngineConfig;
use crate::emotion::UserBaseline;
use crate::engagement::{update_trend, EmotionTrend, PropensityWeight, MAX_WEIGHT, MIN_WEIGHT};
use crate::error::EngineError;
use crate::journal::{JournalOp, JournalRecord};
use crate::model::{entry_bytes, EntryId, EntryKind, MemoryEntry, Timestamp, UtteranceType};
use crate::retrieval::RetrievalIndex;

/// Per-user running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub baseline: UserBaseline,
    pub weight: PropensityWeight,
    pub trend: EmotionTrend,
    pub last_ingest: Option<Timestamp>,
}

impl UserState {
    pub fn new(user_id: &str) -> Self {
        Self {
            baseline: UserBaseline::new(user_id),
            weight: PropensityWeight::new(user_id),
            trend: EmotionTrend::new(user_id),
            last_ingest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub(crate) config: EngineConfig,
    pub(crate) entries: BTreeMap<EntryId, MemoryEntry>,
    /// Every composite ever created, live or not, with its direct sources.
    pub(crate) lineage: BTreeMap<EntryId, Vec<EntryId>>,
    pub(crate) users: BTreeMap<String, UserState>,
    pub(crate) next_raw: u64,
    pub(crate) next_composite: u64,
    pub(crate) last_seq: u64,
    pub(crate) clock: Timestamp,
    // derived from the fields above
    index: RetrievalIndex,
    user_bytes: BTreeMap<String, u64>,
    members: BTreeMap<EntryId, BTreeSet<EntryId>>,
    cover: BTreeMap<EntryId, EntryId>,
}

fn invariant(msg: impl Into<String>) -> EngineError {
    EngineError::Invariant(msg.into())
}

impl EngineState {
    pub fn new(config: EngineConfig) -> Self {
        let seed = config.rng_seed;
        Self {
            config,
            entries: BTreeMap::new(),
            lineage: BTreeMap::new(),
            users: BTreeMap::new(),
            next_raw: 1,
            next_composite: EntryId::COMPOSITE_BASE,
            last_seq: 0,
            clock: Timestamp::MIN,
            index: RetrievalIndex::new(seed),
            user_bytes: BTreeMap::new(),
            members: BTreeMap::new(),
            cover: BTreeMap::new(),
        }
    }

    /// Rebuild derived maps after the persistent fields were loaded.
    pub(crate) fn rebuild_derived(&mut self) -> Result<(), EngineError> {
        self.index = RetrievalIndex::rebuild(self.config.rng_seed, self.entries.values());
        self.user_bytes.clear();
        self.members.clear();
        self.cover.clear();
        for e in self.entries.values() {
            *self.user_bytes.entry(e.user_id.clone()).or_default() += entry_bytes(e);
            let covered = expand(&self.lineage, e.id)?;
            if covered.len() as u64 != e.covered_count {
                return Err(invariant(format!("entry {} covers {} raws, claims {}", e.id, covered.len(), e.covered_count)));
            }
            for &r in &covered {
                if self.cover.insert(r, e.id).is_some() {
                    return Err(invariant(format!("raw {r} covered twice")));
                }
            }
            self.members.insert(e.id, covered);
        }
        Ok(())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: EntryId) -> Option<&MemoryEntry> {
        self.entries.get(&id)
    }

    pub fn user_entries(&self, user_id: &str) -> Vec<&MemoryEntry> {
        self.entries.values().filter(|e| e.user_id == user_id).collect()
    }

    pub fn users(&self) -> &BTreeMap<String, UserState> {
        &self.users
    }

    pub fn user(&self, user_id: &str) -> Option<&UserState> {
        self.users.get(user_id)
    }

    pub fn lineage(&self) -> &BTreeMap<EntryId, Vec<EntryId>> {
        &self.lineage
    }

    /// Raw ids represented by a live entry.
    pub fn members(&self, id: EntryId) -> Option<&BTreeSet<EntryId>> {
        self.members.get(&id)
    }

    /// The live entry representing a raw id.
    pub fn covering(&self, raw: EntryId) -> Option<EntryId> {
        self.cover.get(&raw).copied()
    }

    pub fn index(&self) -> &RetrievalIndex {
        &self.index
    }

    pub fn store_bytes(&self, user_id: &str) -> u64 {
        self.user_bytes.get(user_id).copied().unwrap_or(0)
    }

    pub fn total_bytes(&self) -> u64 {
        self.user_bytes.values().sum()
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn next_raw_id(&self) -> u64 {
        self.next_raw
    }

    pub fn next_composite_id(&self) -> u64 {
        self.next_composite
    }

    /// Latest record time applied, if any.
    pub fn clock(&self) -> Option<Timestamp> {
        (self.clock != Timestamp::MIN).then_some(self.clock)
    }

    fn user_mut(&mut self, user_id: &str) -> &mut UserState {
        self.users
            .entry(user_id.to_string())
            .or_insert_with(|| UserState::new(user_id))
    }

    fn add_live(&mut self, entry: MemoryEntry, covered: BTreeSet<EntryId>) {
        for &r in &covered {
            self.cover.insert(r, entry.id);
        }
        self.members.insert(entry.id, covered);
        *self.user_bytes.entry(entry.user_id.clone()).or_default() += entry_bytes(&entry);
        self.index.insert(&entry);
        self.entries.insert(entry.id, entry);
    }

    fn take_live(&mut self, id: EntryId) -> Result<(MemoryEntry, BTreeSet<EntryId>), EngineError> {
        let entry = self
            .entries
            .remove(&id)
            .ok_or_else(|| invariant(format!("source {id} is not live")))?;
        self.index.remove(&entry);
        let bytes = self.user_bytes.get_mut(&entry.user_id).expect("user has bytes");
        *bytes -= entry_bytes(&entry);
        if *bytes == 0 {
            self.user_bytes.remove(&entry.user_id);
        }
        let covered = self.members.remove(&id).unwrap_or_default();
        Ok((entry, covered))
    }

    /// Insert a composite, consuming its sources.
    fn absorb(&mut self, entry: MemoryEntry, kind: EntryKind) -> Result<(), EngineError> {
        entry.check().map_err(invariant)?;
        if entry.kind != kind {
            return Err(invariant(format!("entry {} has kind {}, expected {kind}", entry.id, entry.kind)));
        }
        if entry.id.0 != self.next_composite {
            return Err(invariant(format!("composite id {} out of sequence (next {})", entry.id, self.next_composite)));
        }
        let mut covered = BTreeSet::new();
        for &s in &entry.source_ids {
            let (src, m) = self.take_live(s)?;
            if src.user_id != entry.user_id {
                return Err(invariant(format!("entry {} merges across users", entry.id)));
            }
            covered.extend(m);
        }
        if covered.len() as u64 != entry.covered_count {
            return Err(invariant(format!("entry {} covered_count mismatch", entry.id)));
        }
        self.next_composite += 1;
        self.lineage.insert(entry.id, entry.source_ids.iter().copied().collect());
        self.add_live(entry, covered);
        Ok(())
    }

    /// Swap a live entry for an updated version of itself.
    fn replace(&mut self, entry: MemoryEntry) -> Result<(), EngineError> {
        entry.check().map_err(invariant)?;
        let old = self.entries.get(&entry.id).ok_or(EngineError::NotFound(entry.id))?;
        if old.user_id != entry.user_id || old.kind != entry.kind || old.source_ids != entry.source_ids {
            return Err(invariant(format!("update to {} changes identity fields", entry.id)));
        }
        let (_, covered) = self.take_live(entry.id)?;
        self.add_live(entry, covered);
        Ok(())
    }

    /// Apply one journal record. Records must arrive in sequence.
    pub fn apply(&mut self, rec: &JournalRecord) -> Result<(), EngineError> {
        if rec.seq != self.last_seq + 1 {
            return Err(EngineError::Corrupt {
                seq: self.last_seq + 1,
                msg: format!("found seq {}", rec.seq),
            });
        }
        match &rec.op {
            JournalOp::Ingest { entry } => {
                entry.check().map_err(invariant)?;
                if entry.kind != EntryKind::Raw || entry.id.0 != self.next_raw {
                    return Err(invariant(format!("ingest of {} out of sequence (next {})", entry.id, self.next_raw)));
                }
                let config = self.config.clone();
                let user = self.user_mut(&entry.user_id);
                if let Some(last) = user.last_ingest {
                    if entry.t_start < last {
                        return Err(EngineError::Clock {
                            user_id: entry.user_id.clone(),
                            last,
                            got: entry.t_start,
                        });
                    }
                }
                user.last_ingest = Some(entry.t_start);
                if entry.utterance_type == UtteranceType::UserUtterance {
                    user.trend = update_trend(&user.trend, &entry.emotion, entry.t_start, &config);
                }
                self.next_raw += 1;
                self.add_live(entry.clone(), BTreeSet::from([entry.id]));
            }
            JournalOp::Merge { summaries } => {
                for s in summaries {
                    self.absorb(s.clone(), EntryKind::Summary)?;
                }
            }
            JournalOp::Prune {
                user_id,
                pruned,
                metas,
                ..
            } => {
                let mut sources = BTreeSet::new();
                for m in metas {
                    if &m.user_id != user_id {
                        return Err(invariant(format!("meta {} belongs to another user", m.id)));
                    }
                    sources.extend(m.source_ids.iter().copied());
                }
                let listed: BTreeSet<EntryId> = pruned.iter().copied().collect();
                if listed != sources || listed.len() != pruned.len() {
                    return Err(invariant("pruned ids disagree with meta sources"));
                }
                for m in metas {
                    self.absorb(m.clone(), EntryKind::Meta)?;
                }
            }
            JournalOp::Pin { entry } | JournalOp::Unpin { entry } | JournalOp::Correct { entry } => {
                let want = !matches!(rec.op, JournalOp::Unpin { .. });
                if entry.pinned != want {
                    return Err(invariant(format!("{} record with pinned={}", rec.op.name(), entry.pinned)));
                }
                self.replace(entry.clone())?;
            }
            JournalOp::BaselineUpdate { baseline } => {
                self.user_mut(&baseline.user_id).baseline = baseline.clone();
            }
            JournalOp::FeedbackWeight { weight } => {
                if !(MIN_WEIGHT..=MAX_WEIGHT).contains(&weight.weight) {
                    return Err(invariant(format!("weight {} out of range", weight.weight)));
                }
                self.user_mut(&weight.user_id).weight = weight.clone();
            }
            JournalOp::CheckIn { user_id, at } => {
                self.user_mut(user_id).trend.last_checkin = Some(*at);
            }
        }
        self.last_seq = rec.seq;
        self.clock = self.clock.max(rec.t);
        Ok(())
    }

    /// Recheck every invariant from scratch. `deep` also rebuilds the
    /// retrieval index and compares it with the incremental one.
    pub fn check_invariants(&self, deep: bool) -> Result<(), String> {
        let mut bytes: BTreeMap<String, u64> = BTreeMap::new();
        let mut seen: BTreeMap<EntryId, EntryId> = BTreeMap::new();
        for (id, e) in &self.entries {
            if *id != e.id {
                return Err(format!("entry keyed {id} has id {}", e.id));
            }
            e.check()?;
            *bytes.entry(e.user_id.clone()).or_default() += entry_bytes(e);
            let covered = expand(&self.lineage, e.id).map_err(|e| e.to_string())?;
            if covered.len() as u64 != e.covered_count {
                return Err(format!("entry {}: covered_count {} but covers {}", e.id, e.covered_count, covered.len()));
            }
            if self.members.get(id) != Some(&covered) {
                return Err(format!("entry {}: member set out of date", e.id));
            }
            for r in covered {
                if let Some(other) = seen.insert(r, e.id) {
                    return Err(format!("raw {r} covered by both {other} and {}", e.id));
                }
            }
        }
        if bytes != self.user_bytes {
            return Err("byte accounting differs from re-serialization".into());
        }
        if seen.len() as u64 != self.next_raw - 1 || seen.keys().next_back().is_some_and(|r| r.0 >= self.next_raw) {
            return Err(format!("{} raws covered, {} ingested", seen.len(), self.next_raw - 1));
        }
        if seen != self.cover {
            return Err("cover map out of date".into());
        }
        for (u, s) in &self.users {
            let w = s.weight.weight;
            if !(MIN_WEIGHT..=MAX_WEIGHT).contains(&w) {
                return Err(format!("user {u}: weight {w} out of range"));
            }
            let t = &s.trend;
            if !(-1.0..=1.0).contains(&t.ema_valence) || !(-1.0..=1.0).contains(&t.ema_arousal) {
                return Err(format!("user {u}: trend out of range"));
            }
        }
        if deep && RetrievalIndex::rebuild(self.config.rng_seed, self.entries.values()) != self.index {
            return Err("retrieval index differs from rebuild".into());
        }
        Ok(())
    }
}

/// Raw ids reachable from `id` through the lineage table.
fn expand(lineage: &BTreeMap<EntryId, Vec<EntryId>>, id: EntryId) -> Result<BTreeSet<EntryId>, EngineError> {
    let mut out = BTreeSet::new();
    let mut stack = vec![id];
    while let Some(cur) = stack.pop() {
        if cur.is_composite() {
            let sources = lineage
                .get(&cur)
                .ok_or_else(|| invariant(format!("composite {cur} has no lineage")))?;
            stack.extend(sources.iter().copied());
        } else if !out.insert(cur) {
            return Err(invariant(format!("raw {cur} reached twice from {id}")));
        }
    }
    Ok(out)
}
