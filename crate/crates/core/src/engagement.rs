//! Proactive engagement: emotion trend tracking, check-in decisions and
//! per-user propensity adapted from responses.

use std::fmt;
use std::str::FromStr;

use crate::config::EngineConfig;
use crate::model::{EmotionState, Seconds, Timestamp};

pub const MIN_WEIGHT: f64 = 0.25;
pub const MAX_WEIGHT: f64 = 2.0;
const POSITIVE_FACTOR: f64 = 1.1;
const NEGATIVE_FACTOR: f64 = 0.9;

/// Exponentially weighted affect for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionTrend {
    pub user_id: String,
    pub ema_valence: f64,
    pub ema_arousal: f64,
    pub last_t: Option<Timestamp>,
    pub below_threshold_since: Option<Timestamp>,
    pub last_checkin: Option<Timestamp>,
}

impl EmotionTrend {
    pub fn new(user_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            ema_valence: 0.0,
            ema_arousal: 0.0,
            last_t: None,
            below_threshold_since: None,
            last_checkin: None,
        }
    }
}

/// Fold one observation into the trend with decay `2^(-Δt / half-life)`.
pub fn update_trend(
    trend: &EmotionTrend,
    emotion: &EmotionState,
    t: Timestamp,
    config: &EngineConfig,
) -> EmotionTrend {
    let mut next = trend.clone();
    match trend.last_t {
        None => {
            next.ema_valence = emotion.valence;
            next.ema_arousal = emotion.arousal;
        }
        Some(prev) => {
            let dt = (t - prev).max(0) as f64;
            let decay = (-dt / config.ema_halflife as f64).exp2();
            next.ema_valence = decay * trend.ema_valence + (1.0 - decay) * emotion.valence;
            next.ema_arousal = decay * trend.ema_arousal + (1.0 - decay) * emotion.arousal;
        }
    }
    next.ema_valence = next.ema_valence.clamp(-1.0, 1.0);
    next.ema_arousal = next.ema_arousal.clamp(-1.0, 1.0);
    next.last_t = Some(t.max(trend.last_t.unwrap_or(t)));
    if next.ema_valence < config.checkin_valence_threshold {
        next.below_threshold_since.get_or_insert(t);
    } else {
        next.below_threshold_since = None;
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EngagementResponse {
    Positive,
    Neutral,
    Negative,
}

impl EngagementResponse {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Neutral => "neutral",
            Self::Negative => "negative",
        }
    }
}

impl fmt::Display for EngagementResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EngagementResponse {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Self::Positive),
            "neutral" => Ok(Self::Neutral),
            "negative" => Ok(Self::Negative),
            other => Err(format!("unknown engagement response {other:?}")),
        }
    }
}

/// How readily check-ins fire for a user.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityWeight {
    pub user_id: String,
    pub weight: f64,
}

impl PropensityWeight {
    pub fn new(user_id: impl Into<String>) -> Self {
        Self {
            user_id: user_id.into(),
            weight: 1.0,
        }
    }
}

pub fn apply_engagement_feedback(
    weight: &PropensityWeight,
    response: EngagementResponse,
) -> PropensityWeight {
    let factor = match response {
        EngagementResponse::Positive => POSITIVE_FACTOR,
        EngagementResponse::Neutral => 1.0,
        EngagementResponse::Negative => NEGATIVE_FACTOR,
    };
    PropensityWeight {
        user_id: weight.user_id.clone(),
        weight: (weight.weight * factor).clamp(MIN_WEIGHT, MAX_WEIGHT),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CheckInReason {
    /// Valence stayed below the threshold long enough.
    SustainedNegative,
    /// Ahead of a significant system event.
    Reminder,
}

impl CheckInReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SustainedNegative => "sustained_negative",
            Self::Reminder => "reminder",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckInEvent {
    pub user_id: String,
    pub t: Timestamp,
    pub reason: CheckInReason,
    pub ema_valence: f64,
}

/// Sustained duration a user must stay below threshold: `window / weight`.
pub fn required_duration(weight: f64, config: &EngineConfig) -> Seconds {
    (config.checkin_window as f64 / weight).ceil() as Seconds
}

/// The earliest time a check-in is due under the current trend, if any.
///
/// The trend only changes at observations, so between observations the
/// due time is exact rather than quantized to evaluation points.
pub fn due_time(trend: &EmotionTrend, weight: &PropensityWeight, config: &EngineConfig) -> Option<Timestamp> {
    let since = trend.below_threshold_since?;
    let mut due = since + required_duration(weight.weight, config);
    if let Some(last) = trend.last_checkin {
        due = due.max(last + config.checkin_window);
    }
    Some(due)
}

/// Emit a check-in if one is due at or before `now`.
pub fn decide_checkin(
    trend: &EmotionTrend,
    weight: &PropensityWeight,
    now: Timestamp,
    config: &EngineConfig,
) -> Option<CheckInEvent> {
    let due = due_time(trend, weight, config)?;
    (due <= now).then(|| CheckInEvent {
        user_id: trend.user_id.clone(),
        t: due,
        reason: CheckInReason::SustainedNegative,
        ema_valence: trend.ema_valence,
    })
}
