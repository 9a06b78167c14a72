//! Emotion annotation: a pluggable annotator interface, the bundled lexicon
//! annotator and per-user neutral-baseline calibration.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::model::{EmotionLabel, EmotionState};
use crate::record::quantize;
use crate::text::tokenize;

const NEUTRAL_BAND: f64 = 0.2;
const ANGRY_AROUSAL: f64 = 0.6;

/// Map circumplex coordinates to a categorical label.
///
/// Rules are evaluated in order: the neutral box `|v| < 0.2 ∧ |a| < 0.2`,
/// then `v ≥ 0.2` is happy, `a ≤ -0.2` is sad, `v ≤ -0.2 ∧ a > 0.6` is
/// angry, and everything else is anxious.
pub fn classify_quadrant(valence: f64, arousal: f64) -> EmotionLabel {
    if valence.abs() < NEUTRAL_BAND && arousal.abs() < NEUTRAL_BAND {
        EmotionLabel::Neutral
    } else if valence >= NEUTRAL_BAND {
        EmotionLabel::Happy
    } else if arousal <= -NEUTRAL_BAND {
        EmotionLabel::Sad
    } else if valence <= -NEUTRAL_BAND && arousal > ANGRY_AROUSAL {
        EmotionLabel::Angry
    } else {
        EmotionLabel::Anxious
    }
}

/// Running mean of a user's uncalibrated affect.
#[derive(Debug, Clone, PartialEq)]
pub struct UserBaseline {
    pub user_id: String,
    pub mean_valence: f64,
    pub mean_arousal: f64,
    pub sample_count: u64,
}

impl UserBaseline {
    pub fn new(user_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            mean_valence: 0.0,
            mean_arousal: 0.0,
            sample_count: 0,
        }
    }
}

/// Incremental mean update with one uncalibrated observation.
pub fn update_baseline(baseline: &UserBaseline, observed: RawAffect) -> UserBaseline {
    let n = baseline.sample_count + 1;
    let step = |mean: f64, x: f64| mean + (x - mean) / n as f64;
    UserBaseline {
        user_id: baseline.user_id.clone(),
        mean_valence: step(baseline.mean_valence, observed.valence).clamp(-1.0, 1.0),
        mean_arousal: step(baseline.mean_arousal, observed.arousal).clamp(-1.0, 1.0),
        sample_count: n,
    }
}

/// Affect estimate before baseline calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawAffect {
    pub valence: f64,
    pub arousal: f64,
    pub confidence: f64,
}

/// Subtract the user's baseline and clamp.
pub fn calibrate(raw: RawAffect, baseline: &UserBaseline) -> EmotionState {
    EmotionState::new(
        raw.valence - baseline.mean_valence,
        raw.arousal - baseline.mean_arousal,
        raw.confidence,
    )
}

/// Anything that can turn text into an affect estimate.
///
/// Implementations must be pure: the same text always yields the same
/// estimate. Calibration against the baseline is shared by default; a plugin
/// that fuses other modalities can override [`AnnotatorPlugin::annotate`].
pub trait AnnotatorPlugin: Send + Sync {
    fn name(&self) -> &str;

    fn raw_affect(&self, text: &str) -> RawAffect;

    fn annotate(&self, text: &str, baseline: &UserBaseline) -> EmotionState {
        calibrate(self.raw_affect(text), baseline)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconError {
    pub line: usize,
    pub msg: String,
}

impl std::fmt::Display for LexiconError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "lexicon line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for LexiconError {}

/// Word → (valence, arousal) table.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    words: HashMap<String, (f64, f64)>,
}

const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.txt");

impl Lexicon {
    /// Parse `word valence arousal` lines.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut words = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| LexiconError {
                line: i + 1,
                msg: msg.to_string(),
            };
            let mut parts = line.split_whitespace();
            let (Some(word), Some(v), Some(a), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(err("expected `word valence arousal`"));
            };
            let v: f64 = v.parse().map_err(|_| err("bad valence"))?;
            let a: f64 = a.parse().map_err(|_| err("bad arousal"))?;
            if !(-1.0..=1.0).contains(&v) || !(-1.0..=1.0).contains(&a) {
                return Err(err("values must lie in [-1, 1]"));
            }
            words.insert(word.to_lowercase(), (v, a));
        }
        Ok(Self { words })
    }

    pub fn bundled() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::parse(BUNDLED_LEXICON).expect("bundled lexicon parses"))
    }

    pub fn get(&self, word: &str) -> Option<(f64, f64)> {
        self.words.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Default annotator: mean lexicon affect of the tokens it recognizes.
#[derive(Debug, Clone)]
pub struct LexiconAnnotator {
    lexicon: Lexicon,
}

impl LexiconAnnotator {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }
}

impl Default for LexiconAnnotator {
    fn default() -> Self {
        Self::new(Lexicon::bundled().clone())
    }
}

impl AnnotatorPlugin for LexiconAnnotator {
    fn name(&self) -> &str {
        "lexicon"
    }

    fn raw_affect(&self, text: &str) -> RawAffect {
        let tokens = tokenize(text);
        let (mut sv, mut sa, mut hits) = (0.0, 0.0, 0usize);
        for (v, a) in tokens.iter().filter_map(|t| self.lexicon.get(t)) {
            sv += v;
            sa += a;
            hits += 1;
        }
        if hits == 0 {
            return RawAffect {
                valence: 0.0,
                arousal: 0.0,
                confidence: 0.0,
            };
        }
        RawAffect {
            valence: quantize(sv / hits as f64),
            arousal: quantize(sa / hits as f64),
            confidence: quantize(hits as f64 / tokens.len() as f64),
        }
    }
}

/// Annotate with the bundled lexicon.
pub fn annotate_lexicon(text: &str, baseline: &UserBaseline) -> EmotionState {
    static ANNOTATOR: OnceLock<LexiconAnnotator> = OnceLock::new();
    ANNOTATOR
        .get_or_init(LexiconAnnotator::default)
        .annotate(text, baseline)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero() -> UserBaseline {
        UserBaseline::new("u")
    }

    #[test]
    fn bundled_lexicon_size() {
        let lex = Lexicon::bundled();
        assert!((30..=40).contains(&lex.len()));
        assert_eq!(lex.get("sad"), Some((-0.7, -0.3)));
    }

    #[test]
    fn empty_text_is_neutral() {
        let e = annotate_lexicon("", &zero());
        assert_eq!((e.valence, e.arousal, e.confidence), (0.0, 0.0, 0.0));
        assert_eq!(e.label, EmotionLabel::Neutral);
    }

    #[test]
    fn sad_sad() {
        let e = annotate_lexicon("sad sad", &zero());
        assert_eq!((e.valence, e.arousal), (-0.7, -0.3));
        assert_eq!(e.label, EmotionLabel::Sad);
        assert_eq!(e.confidence, 1.0);
    }

    #[test]
    fn calibrated_against_baseline() {
        // tokens: i, feel, happy, today; one hit: happy = (0.8, 0.5)
        let mut b = zero();
        b.mean_valence = 0.8;
        let e = annotate_lexicon("I feel happy today", &b);
        assert_eq!(e.valence, 0.0);
        assert_eq!(e.arousal, 0.5);
        assert_eq!(e.confidence, 0.25);
        // |v| < 0.2 but a = 0.5: not neutral, not happy/sad/angry
        assert_eq!(e.label, EmotionLabel::Anxious);
    }

    #[test]
    fn calibration_clamps() {
        let mut b = zero();
        b.mean_valence = -0.9;
        let e = annotate_lexicon("happy", &b);
        assert_eq!(e.valence, 1.0);
    }

    #[test]
    fn zero_baseline_is_identity() {
        let a = LexiconAnnotator::default();
        for text in ["so angry and upset", "calm evening", "nothing here", "joy joy tired"] {
            let raw = a.raw_affect(text);
            let e = a.annotate(text, &zero());
            assert_eq!(e.valence, raw.valence.clamp(-1.0, 1.0));
            assert_eq!(e.arousal, raw.arousal.clamp(-1.0, 1.0));
        }
    }

    #[test]
    fn baseline_updates() {
        let obs = |v, a| RawAffect {
            valence: v,
            arousal: a,
            confidence: 1.0,
        };
        let b1 = update_baseline(&zero(), obs(0.5, 0.5));
        assert_eq!((b1.mean_valence, b1.mean_arousal, b1.sample_count), (0.5, 0.5, 1));
        let b2 = update_baseline(&b1, obs(0.0, 0.0));
        assert_eq!((b2.mean_valence, b2.mean_arousal, b2.sample_count), (0.25, 0.25, 2));
    }

    #[test]
    fn quadrant_examples() {
        assert_eq!(classify_quadrant(0.0, 0.0), EmotionLabel::Neutral);
        assert_eq!(classify_quadrant(-0.7, 0.9), EmotionLabel::Angry);
        assert_eq!(classify_quadrant(0.2, -0.9), EmotionLabel::Happy);
        assert_eq!(classify_quadrant(0.1, -0.2), EmotionLabel::Sad);
        assert_eq!(classify_quadrant(-0.5, 0.6), EmotionLabel::Anxious);
        assert_eq!(classify_quadrant(-0.1, 0.9), EmotionLabel::Anxious);
    }

    #[test]
    fn quadrant_is_total_on_grid() {
        // brute force: every grid point lands in exactly one rule
        for i in -10..=10 {
            for j in -10..=10 {
                let (v, a) = (i as f64 / 10.0, j as f64 / 10.0);
                let rules = [
                    v.abs() < 0.2 && a.abs() < 0.2,
                    !(v.abs() < 0.2 && a.abs() < 0.2) && v >= 0.2,
                    !(v.abs() < 0.2 && a.abs() < 0.2) && v < 0.2 && a <= -0.2,
                    !(v.abs() < 0.2 && a.abs() < 0.2) && v <= -0.2 && a > -0.2 && a > 0.6,
                ];
                let matched = rules.iter().filter(|r| **r).count();
                assert!(matched <= 1, "({v},{a}) matched {matched} rules");
                let expected = match rules.iter().position(|r| *r) {
                    Some(0) => EmotionLabel::Neutral,
                    Some(1) => EmotionLabel::Happy,
                    Some(2) => EmotionLabel::Sad,
                    Some(3) => EmotionLabel::Angry,
                    _ => EmotionLabel::Anxious,
                };
                assert_eq!(classify_quadrant(v, a), expected, "({v},{a})");
                assert_eq!(classify_quadrant(v, a), classify_quadrant(v, a));
            }
        }
    }

    #[test]
    fn lexicon_parse_errors() {
        assert!(Lexicon::parse("word 0.1").is_err());
        assert!(Lexicon::parse("word 2.0 0.0").is_err());
        assert!(Lexicon::parse("word x 0.0").is_err());
        assert_eq!(Lexicon::parse("# c\n\nHi 0.1 0.2\n").unwrap().get("hi"), Some((0.1, 0.2)));
    }
}
