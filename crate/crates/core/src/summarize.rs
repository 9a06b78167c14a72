//! Summarizers used when entries are merged or pruned.

use std::collections::HashMap;

use thiserror::Error;

use crate::text::tokenize;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("summarizer failed: {0}")]
pub struct SummarizeError(pub String);

/// Condenses constituent texts into one summary text.
///
/// Implementations must be deterministic. Callers truncate the result to
/// the cap, so exceeding it is allowed but wasteful.
pub trait Summarizer: Send + Sync {
    fn name(&self) -> &str;

    fn summarize(&self, texts: &[&str], cap: usize) -> Result<String, SummarizeError>;
}

/// Rarity-scored extractive summarizer (the default plugin).
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveSummarizer;

impl Summarizer for ExtractiveSummarizer {
    fn name(&self) -> &str {
        "extractive"
    }

    fn summarize(&self, texts: &[&str], cap: usize) -> Result<String, SummarizeError> {
        Ok(summarize_extractive(texts, cap))
    }
}

/// Split into sentences ending at `.`, `!` or `?` followed by whitespace
/// (or end of text), or at a line break. Sentences are trimmed and empty
/// ones dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        let next_is_break = iter.peek().is_none_or(|(_, n)| n.is_whitespace());
        let end = match c {
            '.' | '!' | '?' if next_is_break => Some(i + c.len_utf8()),
            '\n' => Some(i),
            _ => None,
        };
        if let Some(end) = end {
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Keep the rarest-worded sentences, in original order, within `cap` chars.
///
/// A token's rarity is the inverse of its occurrence count across all input
/// texts; a sentence scores the sum of its tokens' rarities. Duplicate
/// sentences are kept once. Sentences are taken greedily by descending score
/// (earlier first on ties) whenever they still fit, joined by single
/// spaces. If none fits, the shortest sentence is returned on its own.
pub fn summarize_extractive(texts: &[&str], cap: usize) -> String {
    let mut distinct: Vec<&str> = Vec::new();
    for t in texts {
        if !distinct.contains(t) {
            distinct.push(t);
        }
    }
    if let [only] = distinct[..] {
        if char_len(only) <= cap {
            return only.to_string();
        }
    }

    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in texts {
        for tok in tokenize(t) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }

    let mut sentences: Vec<&str> = Vec::new();
    for t in texts {
        for s in split_sentences(t) {
            if !sentences.contains(&s) {
                sentences.push(s);
            }
        }
    }
    if sentences.is_empty() {
        return String::new();
    }

    let scores: Vec<f64> = sentences
        .iter()
        .map(|s| tokenize(s).iter().map(|tok| 1.0 / counts[tok] as f64).sum())
        .collect();

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut chosen: Vec<usize> = Vec::new();
    let mut used = 0usize;
    for &i in &order {
        let cost = char_len(sentences[i]) + usize::from(!chosen.is_empty());
        if used + cost <= cap {
            used += cost;
            chosen.push(i);
        }
    }
    if chosen.is_empty() {
        let shortest = order
            .iter()
            .copied()
            .min_by_key(|&i| char_len(sentences[i]))
            .expect("non-empty");
        chosen.push(shortest);
    }
    chosen.sort_unstable();
    chosen
        .iter()
        .map(|&i| sentences[i])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Truncate to at most `cap` characters.
pub fn truncate_chars(text: &str, cap: usize) -> String {
    match text.char_indices().nth(cap) {
        Some((i, _)) => text[..i].to_string(),
        None => text.to_string(),
    }
}
