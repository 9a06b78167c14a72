//! The memory engine: every mutation becomes a journal record, is
//! persisted, then applied to the in-memory state.

use std::path::Path;
use std::sync::Arc;

use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::config::EngineConfig;
use crate::dimf::{self, Feedback, PruneReport};
use crate::emotion::{update_baseline, AnnotatorPlugin, LexiconAnnotator};
use crate::engagement::{apply_engagement_feedback, decide_checkin, CheckInEvent, EngagementResponse};
use crate::error::EngineError;
use crate::importance::{self, ImportanceComponents};
use crate::journal::{read_journal, JournalOp, JournalRecord, JournalWriter};
use crate::model::{EntryId, MemoryEntry, Timestamp, UtteranceType};
use crate::retrieval::SearchHit;
use crate::snapshot::{encode_snapshot, read_snapshot, write_snapshot};
use crate::state::EngineState;
use crate::summarize::{ExtractiveSummarizer, Summarizer};
use crate::tbc::{compact_pass, CompactionReport};

type CommitObserver = Box<dyn FnMut(&JournalRecord, &EngineState) + Send + Sync>;

/// Result of recovering from disk.
#[derive(Debug)]
pub struct Recovered {
    pub state: EngineState,
    /// Byte length of the journal's valid prefix.
    pub journal_valid_len: u64,
    pub truncated_tail: bool,
}

/// Rebuild state from an optional snapshot plus the journal records after it.
pub fn recover(config: &EngineConfig, journal: &Path, snapshot: Option<&Path>) -> Result<Recovered, EngineError> {
    config.validate()?;
    let mut state = match snapshot {
        Some(p) if p.exists() => read_snapshot(p, config)?,
        _ => EngineState::new(config.clone()),
    };
    let contents = read_journal(journal)?;
    let after = state.last_seq();
    for rec in contents.records.iter().filter(|r| r.seq > after) {
        state.apply(rec)?;
    }
    Ok(Recovered {
        state,
        journal_valid_len: contents.valid_len,
        truncated_tail: contents.truncated_tail,
    })
}

pub struct Engine {
    state: EngineState,
    annotator: Box<dyn AnnotatorPlugin>,
    summarizer: Box<dyn Summarizer>,
    journal: Option<JournalWriter>,
    observer: Option<CommitObserver>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("annotator", &self.annotator.name())
            .field("summarizer", &self.summarizer.name())
            .field("entries", &self.state.len())
            .field("last_seq", &self.state.last_seq())
            .finish()
    }
}

impl Engine {
    /// An engine without a journal.
    pub fn in_memory(config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        Ok(Self::from_state(EngineState::new(config), None))
    }

    /// Start a new journal at `path`, replacing any existing file.
    pub fn create(config: EngineConfig, path: &Path) -> Result<Self, EngineError> {
        config.validate()?;
        let writer = JournalWriter::create(path)?;
        Ok(Self::from_state(EngineState::new(config), Some(writer)))
    }

    /// Recover from disk and reopen the journal for appending.
    pub fn open(config: EngineConfig, journal: &Path, snapshot: Option<&Path>) -> Result<Self, EngineError> {
        let rec = recover(&config, journal, snapshot)?;
        let writer = JournalWriter::open_append(journal, rec.journal_valid_len)?;
        Ok(Self::from_state(rec.state, Some(writer)))
    }

    pub fn from_state(state: EngineState, journal: Option<JournalWriter>) -> Self {
        Self {
            state,
            annotator: Box::new(LexiconAnnotator::default()),
            summarizer: Box::new(ExtractiveSummarizer),
            journal,
            observer: None,
        }
    }

    pub fn with_annotator(mut self, annotator: Box<dyn AnnotatorPlugin>) -> Self {
        self.annotator = annotator;
        self
    }

    pub fn with_summarizer(mut self, summarizer: Box<dyn Summarizer>) -> Self {
        self.summarizer = summarizer;
        self
    }

    /// Called after each record is committed and applied.
    pub fn on_commit(&mut self, observer: impl FnMut(&JournalRecord, &EngineState) + Send + Sync + 'static) {
        self.observer = Some(Box::new(observer));
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn config(&self) -> &EngineConfig {
        self.state.config()
    }

    pub fn into_shared(self) -> SharedEngine {
        SharedEngine(Arc::new(RwLock::new(self)))
    }

    fn commit(&mut self, t: Timestamp, op: JournalOp) -> Result<(), EngineError> {
        let rec = JournalRecord {
            seq: self.state.last_seq() + 1,
            t,
            op,
        };
        if let Some(j) = self.journal.as_mut() {
            j.append(&rec)?;
        }
        self.state.apply(&rec)?;
        if let Some(obs) = self.observer.as_mut() {
            obs(&rec, &self.state);
        }
        Ok(())
    }

    /// Emit every check-in due at or before `now`, in time order.
    pub fn advance_clock(&mut self, now: Timestamp) -> Result<Vec<CheckInEvent>, EngineError> {
        let mut out = Vec::new();
        loop {
            let config = self.state.config();
            let next = self
                .state
                .users()
                .values()
                .filter_map(|u| decide_checkin(&u.trend, &u.weight, now, config))
                .min_by(|a, b| a.t.cmp(&b.t).then_with(|| a.user_id.cmp(&b.user_id)));
            let Some(ev) = next else { break };
            self.commit(
                ev.t,
                JournalOp::CheckIn {
                    user_id: ev.user_id.clone(),
                    at: ev.t,
                },
            )?;
            out.push(ev);
        }
        Ok(out)
    }

    /// Annotate, score and store one utterance. Check-ins that fell due
    /// before `t` are emitted first and returned alongside the entry.
    pub fn ingest(
        &mut self,
        user_id: &str,
        utterance_type: UtteranceType,
        text: &str,
        t: Timestamp,
    ) -> Result<(MemoryEntry, Vec<CheckInEvent>), EngineError> {
        if let Some(last) = self.state.user(user_id).and_then(|u| u.last_ingest) {
            if t < last {
                return Err(EngineError::Clock {
                    user_id: user_id.to_string(),
                    last,
                    got: t,
                });
            }
        }
        let checkins = self.advance_clock(t)?;
        let baseline = self
            .state
            .user(user_id)
            .map(|u| u.baseline.clone())
            .unwrap_or_else(|| crate::emotion::UserBaseline::new(user_id));
        let raw = self.annotator.raw_affect(text);
        let emotion = self.annotator.annotate(text, &baseline);
        let index = self.state.index();
        let vector = index.embedder().embed(text);
        let uniqueness = match index.user(user_id) {
            Some(u) => importance::uniqueness(&vector, u.vectors()),
            None => 1.0,
        };
        let score = importance::score(
            ImportanceComponents {
                intensity: importance::intensity(&emotion),
                feedback_bonus: 0.0,
                uniqueness,
            },
            self.config().importance_weights,
        )?;
        let entry = MemoryEntry::raw(
            EntryId(self.state.next_raw_id()),
            user_id,
            utterance_type,
            t,
            text,
            emotion,
            score,
        );
        self.commit(t, JournalOp::Ingest { entry: entry.clone() })?;
        if utterance_type == UtteranceType::UserUtterance {
            let baseline = update_baseline(&baseline, raw);
            self.commit(t, JournalOp::BaselineUpdate { baseline })?;
        }
        Ok((entry, checkins))
    }

    /// Run one TBC pass over every user's live entries.
    pub fn compact(&mut self, now: Timestamp) -> Result<CompactionReport, EngineError> {
        let live: Vec<&MemoryEntry> = self.state.entries().collect();
        let config = self.state.config();
        let mut next_id = self.state.next_composite_id();
        let plan = compact_pass(
            &live,
            now,
            &config.epoch,
            config.summary_cap_chars,
            self.summarizer.as_ref(),
            &mut next_id,
        )?;
        if !plan.summaries.is_empty() {
            self.commit(now, JournalOp::Merge { summaries: plan.summaries })?;
        }
        Ok(plan.report)
    }

    /// Prune one user's entries down toward the low watermark.
    pub fn prune_user(&mut self, user_id: &str, now: Timestamp) -> Result<PruneReport, EngineError> {
        let entries = self.state.user_entries(user_id);
        let (plan, mut report) = dimf::prune_pass(
            &entries,
            self.state.config(),
            self.summarizer.as_ref(),
            self.state.next_composite_id(),
        )?;
        report.user_id = user_id.to_string();
        report.trigger_bytes = self.state.store_bytes(user_id);
        if !plan.pruned.is_empty() {
            self.commit(
                now,
                JournalOp::Prune {
                    user_id: user_id.to_string(),
                    tau: plan.tau,
                    pruned: plan.pruned,
                    metas: plan.metas,
                },
            )?;
        }
        Ok(report)
    }

    /// Prune every user whose store reached the high watermark.
    pub fn prune_if_needed(&mut self, now: Timestamp) -> Result<Vec<PruneReport>, EngineError> {
        let config = self.state.config();
        let due: Vec<String> = self
            .state
            .users()
            .keys()
            .filter(|u| dimf::should_activate(self.state.store_bytes(u), config))
            .cloned()
            .collect();
        due.iter().map(|u| self.prune_user(u, now)).collect()
    }

    /// Pin, unpin or correct a live entry.
    pub fn apply_feedback(&mut self, id: EntryId, feedback: Feedback, t: Timestamp) -> Result<MemoryEntry, EngineError> {
        let entry = self.state.get(id).ok_or(EngineError::NotFound(id))?;
        let updated = dimf::apply_feedback(entry, &feedback, self.config().importance_weights);
        let op = match feedback {
            Feedback::Pin => JournalOp::Pin { entry: updated.clone() },
            Feedback::Unpin => JournalOp::Unpin { entry: updated.clone() },
            Feedback::Correct(_) => JournalOp::Correct { entry: updated.clone() },
        };
        self.commit(t, op)?;
        Ok(updated)
    }

    pub fn engagement_feedback(
        &mut self,
        user_id: &str,
        response: EngagementResponse,
        t: Timestamp,
    ) -> Result<f64, EngineError> {
        let current = self
            .state
            .user(user_id)
            .map(|u| u.weight.clone())
            .unwrap_or_else(|| crate::engagement::PropensityWeight::new(user_id));
        let weight = apply_engagement_feedback(&current, response);
        let w = weight.weight;
        self.commit(t, JournalOp::FeedbackWeight { weight })?;
        Ok(w)
    }

    /// The live entry standing for `id`: itself if live, else the composite
    /// covering that raw id.
    pub fn resolve(&self, id: EntryId) -> Option<EntryId> {
        if self.state.get(id).is_some() {
            return Some(id);
        }
        self.state.covering(id)
    }

    pub fn search(&self, user_id: Option<&str>, query: &str, k: usize) -> Vec<SearchHit> {
        self.state
            .index()
            .search(user_id, query, k, self.config().retrieval_alpha)
    }

    pub fn store_bytes(&self, user_id: &str) -> u64 {
        self.state.store_bytes(user_id)
    }

    pub fn snapshot_string(&self) -> String {
        encode_snapshot(&self.state)
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<(), EngineError> {
        write_snapshot(&self.state, path)
    }
}

/// An engine behind a reader/writer lock: one writer, many readers.
#[derive(Clone)]
pub struct SharedEngine(Arc<RwLock<Engine>>);

impl SharedEngine {
    pub fn read(&self) -> RwLockReadGuard<'_, Engine> {
        self.0.read()
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Engine> {
        self.0.write()
    }

    /// A frozen copy of the current state.
    pub fn view(&self) -> EngineState {
        self.0.read().state.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{entry_bytes, EntryKind, DAY};

    const T0: Timestamp = 1_736_121_600;

    fn small() -> EngineConfig {
        EngineConfig {
            high_watermark_bytes: 4_000,
            low_watermark_bytes: 2_000,
            ..EngineConfig::default()
        }
    }

    #[test]
    fn first_ingest_defaults() {
        let mut e = Engine::in_memory(EngineConfig::default()).unwrap();
        let (entry, _) = e.ingest("u", UtteranceType::UserUtterance, "I feel happy today", T0).unwrap();
        assert_eq!((entry.level, entry.covered_count, entry.pinned), (0, 1, false));
        assert_eq!(entry.kind, EntryKind::Raw);
        assert_eq!(e.state().get(entry.id), Some(&entry));
        assert_eq!(e.store_bytes("u"), entry_bytes(&entry));
        assert_eq!(e.store_bytes("nobody"), 0);
    }

    #[test]
    fn clock_must_not_go_back() {
        let mut e = Engine::in_memory(EngineConfig::default()).unwrap();
        e.ingest("u", UtteranceType::UserUtterance, "a", T0).unwrap();
        e.ingest("v", UtteranceType::UserUtterance, "a", T0 - 10).unwrap();
        let err = e.ingest("u", UtteranceType::UserUtterance, "b", T0 - 1).unwrap_err();
        assert!(matches!(err, EngineError::Clock { last: T0, .. }));
    }

    #[test]
    fn baseline_only_tracks_user_utterances() {
        let mut e = Engine::in_memory(EngineConfig::default()).unwrap();
        e.ingest("u", UtteranceType::CompanionUtterance, "so happy", T0).unwrap();
        assert!(e.state().user("u").unwrap().baseline.sample_count == 0);
        e.ingest("u", UtteranceType::UserUtterance, "so happy", T0).unwrap();
        assert_eq!(e.state().user("u").unwrap().baseline.sample_count, 1);
    }

    #[test]
    fn prune_keeps_pinned_and_adds_meta() {
        let mut e = Engine::in_memory(EngineConfig {
            low_watermark_bytes: 1,
            high_watermark_bytes: 2,
            ..EngineConfig::default()
        })
        .unwrap();
        let (keep, _) = e.ingest("u", UtteranceType::UserUtterance, "remember this", T0).unwrap();
        for i in 0..5 {
            e.ingest("u", UtteranceType::UserUtterance, &format!("note {i}"), T0 + i).unwrap();
        }
        let pinned = e.apply_feedback(keep.id, Feedback::Pin, T0 + 10).unwrap();
        let reports = e.prune_if_needed(T0 + 10).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].pruned_ids.len(), 5);
        let meta = reports[0].meta_ids_created[0];
        assert_eq!(e.resolve(EntryId(3)), Some(meta));
        e.state().check_invariants(true).unwrap();
        assert_eq!(
            e.store_bytes("u"),
            entry_bytes(&pinned) + entry_bytes(e.state().get(meta).unwrap())
        );
    }

    #[test]
    fn compaction_merges_and_resolves() {
        let mut e = Engine::in_memory(small()).unwrap();
        let mut ids = Vec::new();
        for i in 0..4 {
            let (x, _) = e
                .ingest("u", UtteranceType::UserUtterance, &format!("event {i} happened."), T0 + i * 60)
                .unwrap();
            ids.push(x.id);
        }
        let report = e.compact(T0 + 3 * DAY).unwrap();
        assert_eq!(report.merges.len(), 2);
        assert!(report.bytes_after <= report.bytes_before);
        assert_eq!(e.compact(T0 + 3 * DAY).unwrap().merges.len(), 0);
        let s = e.resolve(ids[0]).unwrap();
        assert!(s.is_composite());
        assert_eq!(e.state().members(s).unwrap().len(), 2);
        e.state().check_invariants(true).unwrap();
    }

    #[test]
    fn shared_engine_reads_frozen_view() {
        let shared = Engine::in_memory(EngineConfig::default()).unwrap().into_shared();
        shared.write().ingest("u", UtteranceType::UserUtterance, "hello", T0).unwrap();
        let view = shared.view();
        let s2 = shared.clone();
        std::thread::spawn(move || {
            s2.write().ingest("u", UtteranceType::UserUtterance, "again", T0 + 1).unwrap();
        })
        .join()
        .unwrap();
        assert_eq!(view.len(), 1);
        assert_eq!(shared.read().state().len(), 2);
    }
}
