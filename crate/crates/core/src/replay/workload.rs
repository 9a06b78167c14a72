//! Synthetic conversation logs.
//!
//! The corpus below is invented: short, repetitive everyday remarks
//! (minor events), longer one-off life events with names and places that
//! the user brings up again later (important events), companion replies,
//! and a few calendar items. Emotion words from the bundled lexicon are
//! mixed in according to a per-user mood that occasionally dips for a few
//! days.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::recall::{RecallClass, RecallItem, RecallSpec};
use super::{EventKind, ReplayEvent};
use crate::dimf::Feedback;
use crate::engagement::EngagementResponse;
use crate::model::{EntryId, Timestamp, UtteranceType, DAY, HOUR};

/// Monday 2025-01-06 00:00 UTC.
pub const DEFAULT_START: Timestamp = 1_736_121_600;
pub const DEFAULT_TURNS: u64 = 11_504;
const CONVERSATION_SECONDS: i64 = 288;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadParams {
    pub seed: u64,
    pub users: usize,
    pub days: u32,
    pub conv_per_day: f64,
    /// Mean turns per conversation when `target_turns` is unset.
    pub turns_per_conv: f64,
    /// Spread exactly this many turns over the generated conversations.
    pub target_turns: Option<u64>,
    pub important_fraction: f64,
    /// Fraction of important events the user pins after re-referencing.
    pub pin_fraction: f64,
    pub start: Timestamp,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        Self {
            seed: 42,
            users: 38,
            days: 28,
            conv_per_day: 7.9,
            turns_per_conv: 1.4,
            target_turns: Some(DEFAULT_TURNS),
            important_fraction: 0.10,
            pin_fraction: 0.2,
            start: DEFAULT_START,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub events: Vec<ReplayEvent>,
    pub recall: RecallSpec,
    /// User plus companion utterances.
    pub turns: u64,
}

const NAMES: &[&str] = &[
    "Clara", "Matteo", "Ingrid", "Tobias", "Marisol", "Dmitri", "Yuki", "Anselm", "Beatriz",
    "Cormac", "Delphine", "Emeka", "Fenna", "Gustavo", "Hildur", "Ilario", "Jovana", "Kasimir",
    "Leontyne", "Mirela", "Nikolai", "Oksana", "Pilar", "Quentin", "Rosalind", "Sebastiano",
    "Thandiwe", "Ulrike", "Valentin", "Wilhelmina", "Xavier", "Yolanda", "Zoltan", "Agnieszka",
    "Bartholomew", "Cosima", "Desmond", "Esperanza", "Florin", "Gwendolyn", "Horatio", "Isolde",
    "Jaroslav", "Katarina", "Lysander", "Magdalena", "Nkechi", "Octavia", "Perpetua", "Radomir",
];

const PLACES: &[&str] = &[
    "Lisbon", "Kyoto", "Reykjavik", "Marrakesh", "Tallinn", "Valparaiso", "Hobart", "Ljubljana",
    "Cartagena", "Tromso", "Zanzibar", "Bruges", "Oaxaca", "Galway", "Salzburg", "Hanoi",
    "Dubrovnik", "Quebec", "Seville", "Krakow", "Nairobi", "Porto", "Bergen", "Cusco", "Adelaide",
    "Antwerp", "Bologna", "Halifax", "Innsbruck", "Jaipur", "Lucerne", "Montevideo", "Nantes",
    "Odessa", "Palermo", "Riga", "Tbilisi", "Uppsala", "Vilnius", "Windhoek",
];

const RELATIONS: &[&str] = &[
    "sister", "brother", "cousin", "friend", "neighbor", "daughter", "son", "niece", "nephew",
    "granddaughter", "grandson", "colleague",
];

/// (phrase, query noun, positive)
const LIFE_EVENTS: &[(&str, &str, bool)] = &[
    ("celebrated a beautiful wedding", "wedding", true),
    ("started a new job at a shipyard", "shipyard", true),
    ("opened a little bakery", "bakery", true),
    ("welcomed a baby girl", "baby", true),
    ("graduated from nursing school", "nursing", true),
    ("moved into an apartment overlooking the harbour", "apartment", true),
    ("won a regional chess tournament", "chess", true),
    ("adopted a scruffy terrier puppy", "terrier", true),
    ("finished running a marathon", "marathon", true),
    ("published a book of poetry", "poetry", true),
    ("restored an old sailing boat", "sailing", true),
    ("sang a solo with the choir", "choir", true),
    ("had surgery on a broken hip", "surgery", false),
    ("lost a job at the factory", "factory", false),
    ("went through a painful divorce", "divorce", false),
    ("was rushed to the hospital with pneumonia", "pneumonia", false),
    ("had a burglary at the house", "burglary", false),
    ("said goodbye at a funeral", "funeral", false),
];

const WHEN: &[&str] = &["last weekend", "yesterday", "this week", "on Saturday", "a few days ago"];

const POSITIVE_WORDS: &[&str] = &["happy", "proud", "excited", "grateful", "glad", "wonderful"];
const NEGATIVE_WORDS: &[&str] = &["sad", "worried", "upset", "scared", "lonely", "stressed"];
const CALM_WORDS: &[&str] = &["calm", "relaxed", "peaceful", "good", "fine", "okay"];
const LOW_WORDS: &[&str] = &["lonely", "sad", "tired", "depressed", "miss", "terrible", "awful"];

const FOODS: &[&str] = &["soup", "pasta", "rice", "toast", "salad", "eggs", "noodles", "oatmeal", "curry"];
const MEALS: &[&str] = &["breakfast", "lunch", "dinner"];
const SHOWS: &[&str] = &["the news", "a quiz show", "a cooking show", "football", "an old movie"];
const ACTIVITIES: &[&str] = &["walk", "swim", "bike ride", "drive"];
const PARTS: &[&str] = &["morning", "afternoon", "evening"];
const WEATHER: &[&str] = &["rainy", "sunny", "cold", "windy", "grey"];
const CHORES: &[&str] = &["laundry", "gardening", "cleaning", "shopping", "ironing"];

const COMPANION: &[&str] = &[
    "That sounds lovely. Tell me more.",
    "I am here for you.",
    "Thank you for sharing that with me.",
    "How did that make you feel?",
    "I remember you mentioning that.",
    "What would you like to do next?",
];

const APPOINTMENTS: &[&str] = &["dentist", "doctor", "physiotherapy", "eye exam", "hearing test"];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Speaker {
    User,
    Companion,
}

#[derive(Debug, Clone)]
struct Turn {
    t: Timestamp,
    speaker: Speaker,
}

struct Draft {
    t: Timestamp,
    user: usize,
    order: u64,
    kind: DraftKind,
}

enum DraftKind {
    Utterance {
        utterance_type: UtteranceType,
        text: String,
        significant: bool,
        mark: Option<(RecallClass, String, Option<Timestamp>)>,
        /// Key linking this utterance to later references.
        key: Option<usize>,
    },
    Pin { key: usize },
    Correct { key: usize, text: String },
    Engagement(EngagementResponse),
    Query { key: usize, text: String },
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty pool")
}

/// Minor remark plus its query.
fn minor_text(rng: &mut ChaCha8Rng, mood_low: bool) -> (String, String) {
    let (text, query) = match rng.random_range(0..5) {
        0 => {
            let (f, m) = (pick(rng, FOODS), pick(rng, MEALS));
            (format!("Had {f} for {m}."), format!("{f} {m}"))
        }
        1 => {
            let s = pick(rng, SHOWS);
            (format!("Watched {s} on TV."), s.to_string())
        }
        2 => {
            let (a, p) = (pick(rng, ACTIVITIES), pick(rng, PARTS));
            (format!("Went for a {a} this {p}."), format!("{a} {p}"))
        }
        3 => {
            let w = pick(rng, WEATHER);
            (format!("The weather was {w} today."), format!("{w} weather"))
        }
        _ => {
            let c = pick(rng, CHORES);
            (format!("Did some {c}."), c.to_string())
        }
    };
    let text = if rng.random_bool(0.5) {
        let word = pick(rng, if mood_low { LOW_WORDS } else { CALM_WORDS });
        format!("{text} Feeling {word}.")
    } else {
        text
    };
    (text, query)
}

/// Conversation turns for one user over the whole period, before text.
fn schedule(rng: &mut ChaCha8Rng, params: &WorkloadParams, convs: &[(u32, u32)], turns: &[u32]) -> Vec<Turn> {
    let mut out = Vec::new();
    let mut last = Timestamp::MIN;
    let mut by_day: Vec<Vec<u32>> = vec![Vec::new(); params.days as usize];
    for (i, &(day, _)) in convs.iter().enumerate() {
        by_day[day as usize].push(turns[i]);
    }
    for (day, day_convs) in by_day.iter().enumerate() {
        let base = params.start + day as i64 * DAY;
        let mut starts: Vec<i64> = day_convs
            .iter()
            .map(|_| rng.random_range(7 * HOUR..23 * HOUR))
            .collect();
        starts.sort_unstable();
        for (s, &n) in starts.iter().zip(day_convs) {
            for j in 0..n {
                let t = (base + s + CONVERSATION_SECONDS * j as i64 / n as i64).max(last);
                last = t;
                let speaker = if j % 2 == 0 { Speaker::User } else { Speaker::Companion };
                out.push(Turn { t, speaker });
            }
        }
    }
    out
}

/// Generate a deterministic synthetic log and its recall spec.
pub fn generate_workload(params: &WorkloadParams) -> Workload {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    if params.days == 0 || params.users == 0 {
        return Workload {
            events: Vec::new(),
            recall: RecallSpec::default(),
            turns: 0,
        };
    }
    let end = params.start + params.days as i64 * DAY;

    // conversations: (day, user) with Poisson counts
    let poisson = Poisson::new(params.conv_per_day.max(1e-9)).expect("positive mean");
    let mut convs: Vec<(u32, u32)> = Vec::new();
    for user in 0..params.users as u32 {
        for day in 0..params.days {
            let n = poisson.sample(&mut rng) as u32;
            convs.extend(std::iter::repeat_n((day, user), n as usize));
        }
    }
    let mut turns = vec![1u32; convs.len()];
    match params.target_turns {
        Some(target) if !convs.is_empty() => {
            let target = target.max(convs.len() as u64);
            for _ in convs.len() as u64..target {
                let i = rng.random_range(0..convs.len());
                turns[i] += 1;
            }
        }
        _ => {
            let extra = Poisson::new((params.turns_per_conv - 1.0).max(1e-9)).expect("positive mean");
            for t in turns.iter_mut() {
                *t += extra.sample(&mut rng) as u32;
            }
        }
    }

    let mut drafts: Vec<Draft> = Vec::new();
    let mut order = 0u64;
    let mut push = |drafts: &mut Vec<Draft>, t, user, kind| {
        drafts.push(Draft { t, user, order, kind });
        order += 1;
    };
    let mut key_count = 0usize;
    let mut total_turns = 0u64;

    for user in 0..params.users {
        let mine: Vec<(u32, u32)> = convs.iter().copied().filter(|c| c.1 == user as u32).collect();
        let my_turns: Vec<u32> = convs
            .iter()
            .zip(&turns)
            .filter(|(c, _)| c.1 == user as u32)
            .map(|(_, &n)| n)
            .collect();
        let plan = schedule(&mut rng, params, &mine, &my_turns);
        total_turns += plan.len() as u64;

        // rough patches: a few days of low mood
        let mut low_days = BTreeSet::new();
        for _ in 0..rng.random_range(0..=2) {
            let first = rng.random_range(0..params.days);
            for d in first..(first + rng.random_range(3..=5)).min(params.days) {
                low_days.insert(d);
            }
        }
        let day_of = |t: Timestamp| ((t - params.start) / DAY) as u32;

        let user_turns: Vec<usize> = (0..plan.len()).filter(|&i| plan[i].speaker == Speaker::User).collect();
        let n_important = (user_turns.len() as f64 * params.important_fraction).round() as usize;
        // importance role per user turn: None = minor, Some(i) = important #i or its reference
        let mut role: Vec<Option<(usize, bool)>> = vec![None; plan.len()];
        let mut candidates = user_turns.clone();
        candidates.shuffle(&mut rng);
        let mut chosen = 0;
        for &i in &candidates {
            if chosen == n_important {
                break;
            }
            if role[i].is_some() {
                continue;
            }
            let later: Vec<usize> = user_turns
                .iter()
                .copied()
                .filter(|&j| plan[j].t >= plan[i].t + DAY && role[j].is_none())
                .collect();
            let Some(&r) = later.choose(&mut rng) else { continue };
            role[i] = Some((chosen, true));
            role[r] = Some((chosen, false));
            chosen += 1;
        }

        let mut names: Vec<&str> = NAMES.to_vec();
        names.shuffle(&mut rng);
        let mut places: Vec<&str> = PLACES.to_vec();
        places.shuffle(&mut rng);
        // per important event: (name, place, noun, key)
        let mut events_info: Vec<Option<(String, String, String, usize)>> = vec![None; n_important];

        for (i, turn) in plan.iter().enumerate() {
            let low = low_days.contains(&day_of(turn.t));
            let (text, mark, key) = match (turn.speaker, role[i]) {
                (Speaker::Companion, _) => (pick(&mut rng, COMPANION).to_string(), None, None),
                (Speaker::User, Some((e, true))) => {
                    let name = names[e % names.len()];
                    let place = places[e % places.len()];
                    let relation = pick(&mut rng, RELATIONS);
                    let &(phrase, noun, positive) = LIFE_EVENTS.choose(&mut rng).expect("non-empty");
                    let when = pick(&mut rng, WHEN);
                    let (w1, w2) = if positive {
                        (pick(&mut rng, POSITIVE_WORDS), pick(&mut rng, POSITIVE_WORDS))
                    } else {
                        (pick(&mut rng, NEGATIVE_WORDS), pick(&mut rng, NEGATIVE_WORDS))
                    };
                    let text = format!(
                        "My {relation} {name} {phrase} in {place} {when}. I feel so {w1} and {w2} about it."
                    );
                    let key = key_count;
                    key_count += 1;
                    events_info[e] = Some((name.to_string(), place.to_string(), noun.to_string(), key));
                    let query = format!("{name} {noun}");
                    (text, Some((RecallClass::Important, query, None)), Some(key))
                }
                (Speaker::User, Some((e, false))) => {
                    let (name, place, noun, key) = events_info[e].clone().expect("original precedes reference");
                    let text = match rng.random_range(0..3) {
                        0 => format!("I keep thinking about {name} and the {noun} in {place}."),
                        1 => format!("Did I tell you more about {name} in {place}?"),
                        _ => format!("{name} called about the {noun} again."),
                    };
                    (text, None, Some(key))
                }
                (Speaker::User, None) => {
                    let (text, query) = minor_text(&mut rng, low);
                    let key = key_count;
                    key_count += 1;
                    (text, Some((RecallClass::Minor, query, None)), Some(key))
                }
            };
            let is_reference = matches!(role[i], Some((_, false)));
            push(
                &mut drafts,
                turn.t,
                user,
                DraftKind::Utterance {
                    utterance_type: match turn.speaker {
                        Speaker::User => UtteranceType::UserUtterance,
                        Speaker::Companion => UtteranceType::CompanionUtterance,
                    },
                    text,
                    significant: false,
                    mark,
                    key,
                },
            );
            if is_reference {
                let key = key.expect("reference has key");
                // fill the original's reference time
                for d in drafts.iter_mut().rev() {
                    if let DraftKind::Utterance { key: Some(k), mark: Some((RecallClass::Important, _, r)), .. } = &mut d.kind {
                        if *k == key && d.user == user {
                            *r = Some(turn.t);
                            break;
                        }
                    }
                }
                if rng.random_bool(params.pin_fraction) {
                    push(&mut drafts, turn.t + 1, user, DraftKind::Pin { key });
                }
            }
        }

        // a couple of calendar items with reminders
        for _ in 0..2 {
            if params.days < 3 {
                break;
            }
            let day = rng.random_range(2..params.days);
            let t = params.start + day as i64 * DAY + rng.random_range(10 * HOUR..18 * HOUR);
            let what = pick(&mut rng, APPOINTMENTS);
            push(
                &mut drafts,
                t,
                user,
                DraftKind::Utterance {
                    utterance_type: UtteranceType::SystemEvent,
                    text: format!("Calendar: {what} appointment."),
                    significant: true,
                    mark: None,
                    key: None,
                },
            );
        }

        // one correction of a minor remark
        let minors: Vec<(Timestamp, usize)> = drafts
            .iter()
            .filter(|d| d.user == user)
            .filter_map(|d| match &d.kind {
                DraftKind::Utterance { mark: Some((RecallClass::Minor, _, _)), key: Some(k), .. } => Some((d.t, *k)),
                _ => None,
            })
            .collect();
        if let Some(&(t, key)) = minors.choose(&mut rng) {
            let (text, _) = minor_text(&mut rng, false);
            push(&mut drafts, t + HOUR, user, DraftKind::Correct { key, text: format!("Actually: {text}") });
        }

        // weekly engagement responses and recall queries
        for week in 0..params.days.div_ceil(7) {
            let t = params.start + (week as i64 * 7 + rng.random_range(0..7)) * DAY + rng.random_range(9 * HOUR..21 * HOUR);
            if t >= end {
                continue;
            }
            let response = *[EngagementResponse::Positive, EngagementResponse::Neutral, EngagementResponse::Negative]
                .choose(&mut rng)
                .expect("non-empty");
            push(&mut drafts, t, user, DraftKind::Engagement(response));
            let known: Vec<(String, String, usize)> = events_info
                .iter()
                .flatten()
                .map(|(name, _, noun, key)| (name.clone(), noun.clone(), *key))
                .collect();
            if let Some((name, noun, key)) = known.choose(&mut rng).cloned() {
                let query_t = t + 60;
                let original_t = drafts.iter().find_map(|d| match &d.kind {
                    DraftKind::Utterance { key: Some(k), .. } if *k == key && d.user == user => Some(d.t),
                    _ => None,
                });
                if original_t.is_some_and(|o| o < query_t) && query_t < end {
                    push(&mut drafts, query_t, user, DraftKind::Query { key, text: format!("{name} {noun}") });
                }
            }
        }
    }

    // global order, then raw ids follow utterance order
    drafts.sort_by_key(|d| (d.t, d.user, d.order));
    let mut ids_by_key: Vec<Option<EntryId>> = vec![None; key_count];
    let mut next = 1u64;
    for d in &drafts {
        if let DraftKind::Utterance { key, .. } = &d.kind {
            if let Some(k) = key {
                // references reuse the original's key; only the first sighting is kept
                if ids_by_key[*k].is_none() {
                    ids_by_key[*k] = Some(EntryId(next));
                }
            }
            next += 1;
        }
    }

    let mut events = Vec::with_capacity(drafts.len() + params.days as usize);
    let mut recall = RecallSpec::default();
    let mut day = 1;
    for d in drafts {
        while params.start + day as i64 * DAY <= d.t {
            events.push(ReplayEvent {
                t: params.start + day as i64 * DAY,
                kind: EventKind::Tick,
            });
            day += 1;
        }
        let user_id = format!("u{:02}", d.user + 1);
        let id_of = |k: usize| ids_by_key[k].expect("keyed utterance exists");
        let kind = match d.kind {
            DraftKind::Utterance {
                utterance_type,
                text,
                significant,
                mark,
                key,
            } => {
                if let (Some((class, query, referenced_at)), Some(k)) = (mark, key) {
                    recall.items.push(RecallItem {
                        user_id: user_id.clone(),
                        raw: id_of(k),
                        class,
                        query,
                        text: text.clone(),
                        referenced_at,
                    });
                }
                EventKind::Utterance {
                    user_id,
                    utterance_type,
                    text,
                    significant,
                }
            }
            DraftKind::Pin { key } => EventKind::Feedback {
                entry: id_of(key),
                feedback: Feedback::Pin,
            },
            DraftKind::Correct { key, text } => EventKind::Feedback {
                entry: id_of(key),
                feedback: Feedback::Correct(text),
            },
            DraftKind::Engagement(response) => EventKind::Engagement { user_id, response },
            DraftKind::Query { key, text } => EventKind::Query {
                user_id: Some(user_id),
                text,
                k: 5,
                expected: vec![id_of(key)],
            },
        };
        events.push(ReplayEvent { t: d.t, kind });
    }
    while day <= params.days {
        events.push(ReplayEvent {
            t: params.start + day as i64 * DAY,
            kind: EventKind::Tick,
        });
        day += 1;
    }
    recall.items.sort_by_key(|i| i.raw);
    Workload {
        events,
        recall,
        turns: total_turns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorkloadParams {
        WorkloadParams {
            users: 3,
            days: 10,
            target_turns: Some(300),
            ..WorkloadParams::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_workload(&small());
        let b = generate_workload(&small());
        assert_eq!(super::super::encode_log(&a.events), super::super::encode_log(&b.events));
        assert_eq!(a.recall, b.recall);
        let c = generate_workload(&WorkloadParams { seed: 7, ..small() });
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn zero_days_is_empty() {
        let w = generate_workload(&WorkloadParams { days: 0, ..small() });
        assert!(w.events.is_empty() && w.recall.items.is_empty());
    }

    #[test]
    fn exact_turn_target_and_sorted_times() {
        let w = generate_workload(&small());
        assert_eq!(w.turns, 300);
        let utterances = w
            .events
            .iter()
            .filter(|e| {
                matches!(
                    &e.kind,
                    EventKind::Utterance { utterance_type, .. } if *utterance_type != UtteranceType::SystemEvent
                )
            })
            .count();
        assert_eq!(utterances, 300);
        assert!(w.events.windows(2).all(|p| p[0].t <= p[1].t));
    }

    #[test]
    fn important_events_are_referenced_later() {
        let w = generate_workload(&small());
        let important: Vec<_> = w.recall.items.iter().filter(|i| i.class == RecallClass::Important).collect();
        assert!(!important.is_empty());
        let utter: Vec<&ReplayEvent> = w.events.iter().filter(|e| matches!(e.kind, EventKind::Utterance { .. })).collect();
        for item in important {
            let original = utter[item.raw.0 as usize - 1];
            let EventKind::Utterance { text, .. } = &original.kind else { unreachable!() };
            assert_eq!(text, &item.text);
            let later = item.referenced_at.expect("reference time");
            assert!(later > original.t);
            let name = item.query.split(' ').next().unwrap();
            assert!(utter.iter().any(|e| e.t == later
                && matches!(&e.kind, EventKind::Utterance { text, .. } if text.contains(name))));
        }
    }
}
