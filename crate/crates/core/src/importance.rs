//! Importance scoring from emotional intensity, user feedback and
//! contextual uniqueness.

use thiserror::Error;

use crate::config::ImportanceWeights;
use crate::model::EmotionState;
use crate::record::quantize;
use crate::retrieval::HashedVector;

#[derive(Debug, Error, PartialEq)]
pub enum ImportanceError {
    #[error("importance weights must be non-negative and sum to 1 (sum = {0})")]
    BadWeights(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceComponents {
    pub intensity: f64,
    pub feedback_bonus: f64,
    pub uniqueness: f64,
}

/// Distance from the circumplex origin, capped at 1.
pub fn intensity(emotion: &EmotionState) -> f64 {
    emotion.valence.hypot(emotion.arousal).min(1.0)
}

/// One minus the best cosine similarity to any existing vector; 1 when
/// there is nothing to compare against.
pub fn uniqueness<'a>(
    vector: &HashedVector,
    neighbors: impl IntoIterator<Item = &'a HashedVector>,
) -> f64 {
    let best = neighbors
        .into_iter()
        .map(|n| vector.cosine(n))
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
    match best {
        None => 1.0,
        Some(c) => (1.0 - c).clamp(0.0, 1.0),
    }
}

pub fn score(c: ImportanceComponents, w: ImportanceWeights) -> Result<f64, ImportanceError> {
    let ws = [w.emotion, w.feedback, w.uniqueness];
    let sum: f64 = ws.iter().sum();
    if ws.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(ImportanceError::BadWeights(sum));
    }
    let s = w.emotion * c.intensity + w.feedback * c.feedback_bonus + w.uniqueness * c.uniqueness;
    Ok(s.clamp(0.0, 1.0))
}

/// Re-score after the feedback bonus flips.
///
/// The blend is linear, and an unpinned score never exceeds `1 - w_f`, so
/// switching the bonus on or off is an exact shift by `w_f`.
pub fn rescore_feedback(importance: f64, w: ImportanceWeights, was: bool, now: bool) -> f64 {
    let delta = match (was, now) {
        (false, true) => w.feedback,
        (true, false) => -w.feedback,
        _ => 0.0,
    };
    quantize((importance + delta).clamp(0.0, 1.0))
}
