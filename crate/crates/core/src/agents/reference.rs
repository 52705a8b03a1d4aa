//! `bistro`: a scripted restaurant-finding remote agent.
//!
//! It fills `location`, `food_type` and `price_range` in that order, skips
//! any slot the caller already knows with confidence at least 0.5, answers
//! from a [`RestaurantStore`], and ends the session right after informing.
//! Saying "never mind" (or "goodbye") ends the session as abandoned.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use super::restaurants::{PriceRange, RestaurantStore};
use crate::protocol::knowledge::KnowledgeConstraint;
use crate::protocol::{
    now_millis, AgentHandler, DialogReport, HandlerError, HandlerReply, InitialState, Outcome, ReportTurn, Speaker,
};
use crate::text::words;

pub const BISTRO_NAME: &str = "bistro";

/// Slots in the order they are asked.
pub const SLOT_ORDER: [&str; 3] = ["location", "food_type", "price_range"];

/// Minimum confidence for an initial-state slot to be taken as known.
pub const S0_MIN_CONFIDENCE: f64 = 0.5;

pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

fn question(slot: &str) -> &'static str {
    match slot {
        "location" => "Which city should I look in?",
        "food_type" => "What kind of food would you like?",
        _ => "Are you looking for something cheap, moderate or expensive?",
    }
}

#[derive(Debug, Default)]
struct BistroSession {
    slots: BTreeMap<&'static str, String>,
    turns: Vec<ReportTurn>,
    /// Every slot was known at `newcall`; the recommendation was already given.
    answered: bool,
}

pub struct BistroAgent {
    store: Arc<RestaurantStore>,
    clock: Clock,
    sessions: Mutex<HashMap<String, BistroSession>>,
    /// Lowercase value -> display form, per slot.
    vocab: BTreeMap<&'static str, BTreeMap<String, String>>,
}

impl BistroAgent {
    pub fn new(store: Arc<RestaurantStore>) -> Self {
        Self::with_clock(store, Arc::new(now_millis))
    }

    pub fn with_clock(store: Arc<RestaurantStore>, clock: Clock) -> Self {
        let mut vocab: BTreeMap<&'static str, BTreeMap<String, String>> = BTreeMap::new();
        for r in store.records() {
            vocab
                .entry("location")
                .or_default()
                .insert(r.location.to_lowercase(), r.location.clone());
            vocab
                .entry("food_type")
                .or_default()
                .insert(r.food_type.to_lowercase(), r.food_type.to_lowercase());
        }
        let prices = vocab.entry("price_range").or_default();
        for p in PriceRange::ALL {
            prices.insert(p.to_string(), p.to_string());
        }
        for (alias, p) in [
            ("inexpensive", PriceRange::Cheap),
            ("budget", PriceRange::Cheap),
            ("affordable", PriceRange::Cheap),
            ("mid range", PriceRange::Moderate),
            ("reasonable", PriceRange::Moderate),
            ("fancy", PriceRange::Expensive),
            ("upscale", PriceRange::Expensive),
        ] {
            prices.insert(alias.to_string(), p.to_string());
        }
        BistroAgent {
            store,
            clock,
            sessions: Mutex::new(HashMap::new()),
            vocab,
        }
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.lock().expect("bistro sessions").len()
    }

    /// Recognizes a known value for `slot` in `text`, longest match first.
    fn extract(&self, slot: &str, text: &str) -> Option<String> {
        let padded = format!(" {} ", words(text).join(" "));
        self.vocab
            .get(slot)?
            .iter()
            .filter(|(k, _)| padded.contains(&format!(" {} ", words(k).join(" "))))
            .max_by_key(|(k, _)| k.len())
            .map(|(_, v)| v.clone())
    }

    fn normalize_known(&self, slot: &str, value: &str) -> String {
        self.extract(slot, value).unwrap_or_else(|| value.trim().to_string())
    }

    fn stamp(&self, session: &mut BistroSession, speaker: Speaker, text: &str) {
        let last = session.turns.last().map_or(i64::MIN, |t| t.timestamp);
        session.turns.push(ReportTurn {
            speaker,
            text: text.to_string(),
            timestamp: (self.clock)().max(last),
        });
    }

    fn next_missing(session: &BistroSession) -> Option<&'static str> {
        SLOT_ORDER.into_iter().find(|s| !session.slots.contains_key(s))
    }

    fn recommend(&self, session: &BistroSession) -> (String, Option<String>) {
        let constraints: Vec<KnowledgeConstraint> = session
            .slots
            .iter()
            .map(|(k, v)| KnowledgeConstraint::eq(k, v))
            .collect();
        let hits = self.store.restaurant_search(&constraints).unwrap_or_default();
        let (loc, food, price) = (
            &session.slots["location"],
            &session.slots["food_type"],
            &session.slots["price_range"],
        );
        match hits.first() {
            Some(r) => (
                format!(
                    "How about {}? It is a {} {} place in {} rated {:.1}. Enjoy your meal!",
                    r.name, r.price_range, r.food_type, r.location, r.rating
                ),
                Some(r.name.clone()),
            ),
            None => (
                format!("Sorry, I could not find a {price} {food} restaurant in {loc}."),
                None,
            ),
        }
    }

    fn finish(&self, token: &str, mut session: BistroSession, reply: String, outcome: Outcome, result: Option<String>) -> HandlerReply {
        self.stamp(&mut session, Speaker::System, &reply);
        let mut extras = BTreeMap::new();
        extras.insert(
            "slots".to_string(),
            serde_json::to_value(&session.slots).expect("string map serializes"),
        );
        extras.insert(
            "result".to_string(),
            result.map(serde_json::Value::String).unwrap_or(serde_json::Value::Null),
        );
        HandlerReply {
            reply,
            ended: true,
            report: Some(DialogReport {
                session_token: token.to_string(),
                turns: session.turns,
                outcome,
                extras,
            }),
        }
    }
}

fn wants_out(text: &str) -> bool {
    let t = format!(" {} ", words(text).join(" "));
    [" never mind ", " nevermind ", " cancel ", " goodbye ", " bye "].iter().any(|p| t.contains(p))
}

impl AgentHandler for BistroAgent {
    fn name(&self) -> &str {
        BISTRO_NAME
    }

    fn on_new_call(&self, token: &str, _user_id: &str, s0: &InitialState) -> Result<String, HandlerError> {
        let mut session = BistroSession::default();
        for slot in SLOT_ORDER {
            if let Some(known) = s0.known_slots.get(slot) {
                if known.conf >= S0_MIN_CONFIDENCE && !known.value.trim().is_empty() {
                    session.slots.insert(slot, self.normalize_known(slot, &known.value));
                }
            }
        }
        let reply = match Self::next_missing(&session) {
            Some(slot) => format!("Hi, this is Bistro. {}", question(slot)),
            None => {
                session.answered = true;
                format!("Hi, this is Bistro. {}", self.recommend(&session).0)
            }
        };
        self.stamp(&mut session, Speaker::System, &reply);
        self.sessions
            .lock()
            .expect("bistro sessions")
            .insert(token.to_string(), session);
        Ok(reply)
    }

    fn on_next(&self, token: &str, utt: &str) -> Result<HandlerReply, HandlerError> {
        let mut sessions = self.sessions.lock().expect("bistro sessions");
        let mut session = sessions
            .remove(token)
            .ok_or_else(|| HandlerError::Failed(format!("no session {token}")))?;
        drop(sessions);
        self.stamp(&mut session, Speaker::User, utt);

        if wants_out(utt) {
            return Ok(self.finish(token, session, "No problem. Handing you back.".into(), Outcome::Abandoned, None));
        }
        if session.answered {
            return Ok(self.finish(token, session, "Goodbye!".into(), Outcome::Completed, None));
        }
        let asked = Self::next_missing(&session);
        let mut filled_asked = false;
        for slot in SLOT_ORDER {
            if let Some(v) = self.extract(slot, utt) {
                filled_asked |= Some(slot) == asked;
                session.slots.insert(slot, v);
            }
        }
        let reply = match Self::next_missing(&session) {
            None => {
                let (text, result) = self.recommend(&session);
                return Ok(self.finish(token, session, text, Outcome::Completed, result));
            }
            Some(slot) if filled_asked || Some(slot) != asked => question(slot).to_string(),
            Some("location") => {
                let cities: Vec<&str> = self.vocab["location"].values().map(String::as_str).collect();
                format!("Sorry, I only know restaurants in {}. {}", cities.join(", "), question("location"))
            }
            Some(slot) => format!("Sorry, I did not get that. {}", question(slot)),
        };
        self.stamp(&mut session, Speaker::System, &reply);
        self.sessions
            .lock()
            .expect("bistro sessions")
            .insert(token.to_string(), session);
        Ok(HandlerReply {
            reply,
            ended: false,
            report: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{InProcessAgent, RemoteAgent};

    const CSV: &str = "name,location,food_type,price_range,rating\n\
                       Noodle Bar,Pittsburgh,thai,cheap,4.0\n\
                       Siam,Pittsburgh,thai,moderate,4.5\n\
                       Lupo,San Francisco,italian,expensive,4.5\n";

    fn agent() -> InProcessAgent {
        let store = Arc::new(RestaurantStore::from_csv(CSV).unwrap());
        let clock = Mutex::new(0i64);
        InProcessAgent::new(Arc::new(BistroAgent::with_clock(
            store,
            Arc::new(move || {
                let mut c = clock.lock().unwrap();
                *c += 10;
                *c
            }),
        )))
    }

    #[test]
    fn skips_known_location() {
        let a = agent();
        let open = a.new_call("u", &InitialState::default()).unwrap();
        assert!(open.reply.contains("Which city"));
        let s0 = InitialState::default().with_slot("location", "pittsburgh", 0.95);
        let open = a.new_call("u", &s0).unwrap();
        assert!(open.reply.contains("What kind of food"), "{}", open.reply);
        let weak = InitialState::default().with_slot("location", "Pittsburgh", 0.3);
        assert!(a.new_call("u", &weak).unwrap().reply.contains("Which city"));
    }

    #[test]
    fn full_session_reports_every_turn() {
        let a = agent();
        let open = a.new_call("u", &InitialState::default()).unwrap();
        let script = ["I am in San Francisco", "italian please", "fancy"];
        let mut last = None;
        for (i, u) in script.iter().enumerate() {
            let r = a.next(&open.token, u).unwrap();
            assert_eq!(r.ended, i == 2);
            last = Some(r);
        }
        let r = last.unwrap();
        assert!(r.reply.contains("Lupo"));
        let report = r.report.unwrap();
        assert_eq!(report.outcome, Outcome::Completed);
        assert_eq!(report.user_texts(), script);
        assert!(report.is_time_ordered());
        assert_eq!(report.turns.len(), 2 * script.len() + 1);
        assert_eq!(report.extras["result"], "Lupo");
    }

    #[test]
    fn fills_several_slots_at_once_and_reprompts() {
        let a = agent();
        let open = a.new_call("u", &InitialState::default()).unwrap();
        let r = a.next(&open.token, "Atlantis").unwrap();
        assert!(r.reply.starts_with("Sorry, I only know restaurants in"));
        let r = a.next(&open.token, "cheap thai in pittsburgh").unwrap();
        assert!(r.ended);
        assert!(r.reply.contains("Noodle Bar"));
    }

    #[test]
    fn never_mind_abandons() {
        let a = agent();
        let open = a.new_call("u", &InitialState::default()).unwrap();
        let r = a.next(&open.token, "oh never mind").unwrap();
        assert!(r.ended);
        assert_eq!(r.report.unwrap().outcome, Outcome::Abandoned);
        assert!(a.next(&open.token, "hello").is_err());
    }

    #[test]
    fn no_match_still_completes() {
        let a = agent();
        let s0 = InitialState::default()
            .with_slot("location", "San Francisco", 1.0)
            .with_slot("food_type", "thai", 1.0);
        let open = a.new_call("u", &s0).unwrap();
        assert!(open.reply.contains("cheap, moderate or expensive"));
        let r = a.next(&open.token, "cheap").unwrap();
        assert!(r.reply.starts_with("Sorry, I could not find"));
        assert_eq!(r.report.unwrap().outcome, Outcome::Completed);
    }

    #[test]
    fn all_known_answers_in_opening() {
        let a = agent();
        let s0 = InitialState::default()
            .with_slot("location", "Pittsburgh", 1.0)
            .with_slot("food_type", "thai", 1.0)
            .with_slot("price_range", "moderate", 1.0);
        let open = a.new_call("u", &s0).unwrap();
        assert!(open.reply.contains("Siam"));
        let r = a.next(&open.token, "thanks").unwrap();
        assert!(r.ended);
    }
}
