//! Hybrid keyword and vector-similarity retrieval over live entries.
//!
//! Each user has an independent index: document frequencies, corpus size
//! and vectors are per user, matching how memories are recalled.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::hash::stable_hash;
use crate::model::{EntryId, MemoryEntry, Timestamp};
use crate::text::tokenize;

/// Dimension of hashed bag-of-words vectors.
pub const DIM: usize = 256;

/// L2-normalized hashed bag-of-words vector (or exactly zero).
#[derive(Debug, Clone, PartialEq)]
pub struct HashedVector(Box<[f64]>);

impl HashedVector {
    pub fn zero() -> Self {
        Self(vec![0.0; DIM].into_boxed_slice())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|x| *x == 0.0)
    }

    /// Cosine similarity; vectors are unit length so this is the dot
    /// product, and zero vectors score 0.
    pub fn cosine(&self, other: &HashedVector) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Deterministic text embedder.
#[derive(Debug, Clone, Copy)]
pub struct Embedder {
    seed: u64,
}

impl Embedder {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn dimension(&self, token: &str) -> usize {
        (stable_hash(self.seed, token.as_bytes()) % DIM as u64) as usize
    }

    pub fn embed(&self, text: &str) -> HashedVector {
        let mut v = vec![0.0; DIM];
        for token in tokenize(text) {
            v[self.dimension(&token)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        HashedVector(v.into_boxed_slice())
    }
}

/// Inverted term index with per-entry token counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TermIndex {
    postings: BTreeMap<String, BTreeMap<EntryId, u32>>,
    token_counts: BTreeMap<EntryId, u32>,
}

impl TermIndex {
    pub fn insert(&mut self, id: EntryId, text: &str) {
        let tokens = tokenize(text);
        self.token_counts.insert(id, tokens.len() as u32);
        for t in tokens {
            *self.postings.entry(t).or_default().entry(id).or_insert(0) += 1;
        }
    }

    pub fn remove(&mut self, id: EntryId, text: &str) {
        self.token_counts.remove(&id);
        let distinct: BTreeSet<String> = tokenize(text).into_iter().collect();
        for t in distinct {
            if let Some(list) = self.postings.get_mut(&t) {
                list.remove(&id);
                if list.is_empty() {
                    self.postings.remove(&t);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.token_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_counts.is_empty()
    }

    pub fn document_frequency(&self, token: &str) -> usize {
        self.postings.get(token).map_or(0, BTreeMap::len)
    }

    pub fn term_frequency(&self, token: &str, id: EntryId) -> u32 {
        self.postings
            .get(token)
            .and_then(|p| p.get(&id))
            .copied()
            .unwrap_or(0)
    }

    /// `Σ tf·ln(1 + N/df)` over distinct shared tokens, divided by the
    /// entry's token count.
    pub fn keyword_score(&self, query_tokens: &BTreeSet<String>, id: EntryId) -> f64 {
        let Some(&count) = self.token_counts.get(&id) else {
            return 0.0;
        };
        if count == 0 {
            return 0.0;
        }
        let n = self.len() as f64;
        let mut sum = 0.0;
        for t in query_tokens {
            let Some(list) = self.postings.get(t) else {
                continue;
            };
            if let Some(&tf) = list.get(&id) {
                sum += f64::from(tf) * (1.0 + n / list.len() as f64).ln();
            }
        }
        sum / f64::from(count)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Doc {
    t_start: Timestamp,
    vector: HashedVector,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserIndex {
    terms: TermIndex,
    docs: BTreeMap<EntryId, Doc>,
}

impl UserIndex {
    pub fn terms(&self) -> &TermIndex {
        &self.terms
    }

    pub fn vectors(&self) -> impl Iterator<Item = &HashedVector> {
        self.docs.values().map(|d| &d.vector)
    }

    pub fn vector(&self, id: EntryId) -> Option<&HashedVector> {
        self.docs.get(&id).map(|d| &d.vector)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit {
    pub id: EntryId,
    pub score: f64,
}

/// Ranking order: higher score, then newer `t_start`, then smaller id.
pub fn rank_order(a: (f64, Timestamp, EntryId), b: (f64, Timestamp, EntryId)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.cmp(&a.1))
        .then_with(|| a.2.cmp(&b.2))
}

#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    embedder: Embedder,
    users: BTreeMap<String, UserIndex>,
}

impl PartialEq for RetrievalIndex {
    fn eq(&self, other: &Self) -> bool {
        self.users == other.users
    }
}

impl RetrievalIndex {
    pub fn new(seed: u64) -> Self {
        Self {
            embedder: Embedder::new(seed),
            users: BTreeMap::new(),
        }
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn user(&self, user_id: &str) -> Option<&UserIndex> {
        self.users.get(user_id)
    }

    pub fn insert(&mut self, entry: &MemoryEntry) {
        let vector = self.embedder.embed(&entry.text);
        let u = self.users.entry(entry.user_id.clone()).or_default();
        u.terms.insert(entry.id, &entry.text);
        u.docs.insert(
            entry.id,
            Doc {
                t_start: entry.t_start,
                vector,
            },
        );
    }

    pub fn remove(&mut self, entry: &MemoryEntry) {
        if let Some(u) = self.users.get_mut(&entry.user_id) {
            u.terms.remove(entry.id, &entry.text);
            u.docs.remove(&entry.id);
            if u.docs.is_empty() {
                self.users.remove(&entry.user_id);
            }
        }
    }

    pub fn rebuild<'a>(seed: u64, entries: impl IntoIterator<Item = &'a MemoryEntry>) -> Self {
        let mut idx = Self::new(seed);
        for e in entries {
            idx.insert(e);
        }
        idx
    }

    /// Blend keyword and cosine scores; `None` searches every user.
    pub fn search(&self, user_id: Option<&str>, query: &str, k: usize, alpha: f64) -> Vec<SearchHit> {
        if k == 0 {
            return Vec::new();
        }
        let q_tokens: BTreeSet<String> = tokenize(query).into_iter().collect();
        let q_vec = self.embedder.embed(query);
        let users: Vec<&UserIndex> = match user_id {
            Some(u) => self.users.get(u).into_iter().collect(),
            None => self.users.values().collect(),
        };
        let mut scored: Vec<(f64, Timestamp, EntryId)> = Vec::new();
        for u in users {
            for (&id, doc) in &u.docs {
                let kw = u.terms.keyword_score(&q_tokens, id);
                let cos = q_vec.cosine(&doc.vector);
                scored.push((alpha * kw + (1.0 - alpha) * cos, doc.t_start, id));
            }
        }
        scored.sort_by(|a, b| rank_order(*a, *b));
        scored
            .into_iter()
            .take(k)
            .map(|(score, _, id)| SearchHit { id, score })
            .collect()
    }
}
