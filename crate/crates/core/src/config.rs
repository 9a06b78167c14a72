//! Engine tunables.
//!
//! A config file is flat `key=value` lines; `#` starts a comment. Durations
//! accept a unit suffix (`s`, `m`, `h`, `d`, `w`) and default to seconds.
//! Unknown keys are rejected so typos do not silently fall back to defaults.

use std::path::Path;

use thiserror::Error;

use crate::hash::stable_hash;
use crate::model::{Seconds, DAY, HOUR};
use crate::record::Record;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

/// Geometric age-level schedule for temporal compaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochConfig {
    pub base_duration: Seconds,
    pub growth_factor: f64,
    pub max_level: u32,
}

impl Default for EpochConfig {
    fn default() -> Self {
        Self {
            base_duration: DAY,
            growth_factor: 2.0,
            max_level: 8,
        }
    }
}

impl EpochConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.base_duration <= 0 {
            return Err(ConfigError::Invalid("epoch.base_duration must be positive".into()));
        }
        if !(self.growth_factor.is_finite() && self.growth_factor > 1.0) {
            return Err(ConfigError::Invalid("epoch.growth_factor must be > 1".into()));
        }
        if self.max_level == 0 {
            return Err(ConfigError::Invalid("epoch.max_level must be positive".into()));
        }
        Ok(())
    }

    /// Age at which an entry reaches `level`: `base · growth^level`.
    pub fn boundary(&self, level: u32) -> f64 {
        self.base_duration as f64 * self.growth_factor.powi(level as i32)
    }
}

/// Blend weights for importance scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceWeights {
    pub emotion: f64,
    pub feedback: f64,
    pub uniqueness: f64,
}

impl Default for ImportanceWeights {
    fn default() -> Self {
        Self {
            emotion: 0.5,
            feedback: 0.2,
            uniqueness: 0.3,
        }
    }
}

impl ImportanceWeights {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = [self.emotion, self.feedback, self.uniqueness];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(ConfigError::Invalid("importance weights must be non-negative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "importance weights must sum to 1 (got {sum})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub epoch: EpochConfig,
    pub importance_weights: ImportanceWeights,
    /// Per-user store size at which pruning activates.
    pub high_watermark_bytes: u64,
    /// Per-user store size pruning aims for.
    pub low_watermark_bytes: u64,
    pub summary_cap_chars: usize,
    pub retrieval_alpha: f64,
    pub compaction_period: Seconds,
    pub ema_halflife: Seconds,
    pub checkin_valence_threshold: f64,
    pub checkin_window: Seconds,
    /// Lead time of contextual reminders before a significant system event.
    pub reminder_lead: Seconds,
    pub rng_seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            epoch: EpochConfig::default(),
            importance_weights: ImportanceWeights::default(),
            high_watermark_bytes: 64 * 1024,
            low_watermark_bytes: 16 * 1024,
            summary_cap_chars: 240,
            retrieval_alpha: 0.5,
            compaction_period: DAY,
            ema_halflife: 2 * DAY,
            checkin_valence_threshold: -0.3,
            checkin_window: DAY,
            reminder_lead: 24 * HOUR,
            rng_seed: 42,
        }
    }
}

const KEYS: &[&str] = &[
    "checkin_valence_threshold",
    "checkin_window",
    "compaction_period",
    "ema_halflife",
    "epoch.base_duration",
    "epoch.growth_factor",
    "epoch.max_level",
    "high_watermark_bytes",
    "importance.w_emotion",
    "importance.w_feedback",
    "importance.w_uniqueness",
    "low_watermark_bytes",
    "reminder_lead",
    "retrieval_alpha",
    "rng_seed",
    "summary_cap_chars",
];

pub fn parse_duration(s: &str) -> Option<Seconds> {
    let s = s.trim();
    let (num, unit) = match s.char_indices().last()? {
        (i, c) if c.is_ascii_alphabetic() => (&s[..i], c),
        _ => (s, 's'),
    };
    let n: i64 = num.trim().parse().ok()?;
    let mult = match unit {
        's' => 1,
        'm' => 60,
        'h' => HOUR,
        'd' => DAY,
        'w' => 7 * DAY,
        _ => return None,
    };
    n.checked_mul(mult)
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.epoch.validate()?;
        self.importance_weights.validate()?;
        if self.low_watermark_bytes == 0 || self.high_watermark_bytes == 0 {
            return Err(ConfigError::Invalid("watermarks must be positive".into()));
        }
        if self.low_watermark_bytes >= self.high_watermark_bytes {
            return Err(ConfigError::Invalid(
                "low_watermark_bytes must be below high_watermark_bytes".into(),
            ));
        }
        if self.summary_cap_chars == 0 {
            return Err(ConfigError::Invalid("summary_cap_chars must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.retrieval_alpha) {
            return Err(ConfigError::Invalid("retrieval_alpha must be in [0,1]".into()));
        }
        for (name, d) in [
            ("compaction_period", self.compaction_period),
            ("ema_halflife", self.ema_halflife),
            ("checkin_window", self.checkin_window),
        ] {
            if d <= 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if self.reminder_lead < 0 {
            return Err(ConfigError::Invalid("reminder_lead must be non-negative".into()));
        }
        if !(-1.0..=1.0).contains(&self.checkin_valence_threshold) {
            return Err(ConfigError::Invalid(
                "checkin_valence_threshold must be in [-1,1]".into(),
            ));
        }
        Ok(())
    }

    /// Apply a single `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        let dur = || parse_duration(value).ok_or_else(|| format!("bad duration {value:?}"));
        let real = || value.parse::<f64>().map_err(|_| format!("bad number {value:?}"));
        let int = || value.parse::<u64>().map_err(|_| format!("bad integer {value:?}"));
        match key {
            "checkin_valence_threshold" => self.checkin_valence_threshold = real()?,
            "checkin_window" => self.checkin_window = dur()?,
            "compaction_period" => self.compaction_period = dur()?,
            "ema_halflife" => self.ema_halflife = dur()?,
            "epoch.base_duration" => self.epoch.base_duration = dur()?,
            "epoch.growth_factor" => self.epoch.growth_factor = real()?,
            "epoch.max_level" => self.epoch.max_level = int()? as u32,
            "high_watermark_bytes" => self.high_watermark_bytes = int()?,
            "importance.w_emotion" => self.importance_weights.emotion = real()?,
            "importance.w_feedback" => self.importance_weights.feedback = real()?,
            "importance.w_uniqueness" => self.importance_weights.uniqueness = real()?,
            "low_watermark_bytes" => self.low_watermark_bytes = int()?,
            "reminder_lead" => self.reminder_lead = dur()?,
            "retrieval_alpha" => self.retrieval_alpha = real()?,
            "rng_seed" => self.rng_seed = int()?,
            "summary_cap_chars" => self.summary_cap_chars = int()? as usize,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Parse a flat config text on top of the defaults and validate it.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: i + 1,
                msg: "expected key=value".into(),
            })?;
            cfg.set(k.trim(), v)
                .map_err(|msg| ConfigError::Parse { line: i + 1, msg })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.put_real("checkin_valence_threshold", self.checkin_valence_threshold)
            .put_display("checkin_window", self.checkin_window)
            .put_display("compaction_period", self.compaction_period)
            .put_display("ema_halflife", self.ema_halflife)
            .put_display("epoch.base_duration", self.epoch.base_duration)
            .put_real("epoch.growth_factor", self.epoch.growth_factor)
            .put_display("epoch.max_level", self.epoch.max_level)
            .put_display("high_watermark_bytes", self.high_watermark_bytes)
            .put_real("importance.w_emotion", self.importance_weights.emotion)
            .put_real("importance.w_feedback", self.importance_weights.feedback)
            .put_real("importance.w_uniqueness", self.importance_weights.uniqueness)
            .put_display("low_watermark_bytes", self.low_watermark_bytes)
            .put_display("reminder_lead", self.reminder_lead)
            .put_real("retrieval_alpha", self.retrieval_alpha)
            .put_display("rng_seed", self.rng_seed)
            .put_display("summary_cap_chars", self.summary_cap_chars);
        debug_assert!(r.keys().eq(KEYS.iter().copied()));
        r
    }

    /// Render as a config file that [`EngineConfig::parse`] reads back.
    pub fn to_file_text(&self) -> String {
        let r = self.to_record();
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push('=');
            out.push_str(r.get(key).unwrap_or_default());
            out.push('\n');
        }
        out
    }

    /// Stable fingerprint recorded in snapshots.
    pub fn hash(&self) -> u64 {
        stable_hash(0, self.to_record().encode().as_bytes())
    }
}
