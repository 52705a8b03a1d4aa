use std::sync::Arc;

use dialhub_core::act::{ActValue, DialogAct, SystemAction};
use dialhub_core::config::{Config, SHIPPED_LEXICON};
use dialhub_core::engine::{DialogState, Engine, EngineError, EngineSettings, InvalidTree, NodeSpec, TaskTree};
use dialhub_core::nlu::{self, Lexicon};
use dialhub_core::ontology::{Concept, Grounding, Ontology, Pool, Subscription};
use dialhub_core::protocol::AgentDirectory;

struct Harness {
    engine: Engine,
    lexicon: Lexicon,
}

impl Harness {
    fn shipped() -> Self {
        Self::with_config(Config::shipped().unwrap())
    }

    fn with_config(config: Config) -> Self {
        let lexicon = format!("{SHIPPED_LEXICON}\nentity Location@0.3: Atlantis\nentity Location@0.6: Gotham\n");
        Harness {
            engine: config.engine(Arc::new(config.directory())).unwrap(),
            lexicon: Lexicon::parse(&lexicon).unwrap(),
        }
    }

    fn start(&self) -> (DialogState, SystemAction) {
        self.engine.start_session("t").unwrap()
    }

    fn say(&self, state: &mut DialogState, text: &str) -> SystemAction {
        self.engine.run_turn(state, &nlu::parse(text, &self.lexicon)).unwrap()
    }
}

fn asks(action: &SystemAction, concept: &str) -> bool {
    action
        .acts
        .iter()
        .any(|a| a.act == DialogAct::Ask && a.value == ActValue::concept(concept))
}

#[test]
fn greeting_then_goal_question() {
    let h = Harness::shipped();
    let (state, greeting) = h.start();
    assert_eq!(greeting.kinds(), [DialogAct::Hello, DialogAct::Ask]);
    assert!(asks(&greeting, "user_goal"));
    assert_eq!(state.depth(), 2);
}

#[test]
fn weather_slot_filling_and_inform() {
    let h = Harness::shipped();
    let (mut s, _) = h.start();
    assert!(asks(&h.say(&mut s, "what is the weather"), "location"));
    assert!(asks(&h.say(&mut s, "Pittsburgh"), "date_time"));
    let out = h.say(&mut s, "tomorrow");
    assert_eq!(out.kinds(), [DialogAct::ConfirmImplicit, DialogAct::Inform, DialogAct::Ask]);
    match &out.acts[1].value {
        ActValue::Filled { class, slots } => {
            assert_eq!(class, "weather");
            assert_eq!(slots["condition"], "light rain");
            assert_eq!(slots["date"], "2017-03-02");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(asks(&out, "user_goal"));
    assert_eq!(s.beliefs.entry("date_time", "value").unwrap().grounding, Grounding::Grounded);
}

#[test]
fn repeated_weather_request_reuses_grounded_slots() {
    let h = Harness::shipped();
    let (mut s, _) = h.start();
    h.say(&mut s, "weather in Boston today");
    let again = h.say(&mut s, "what is the weather");
    assert_eq!(again.kinds(), [DialogAct::Inform, DialogAct::Ask]);
}

#[test]
fn unknown_forecast_uses_missing_class() {
    let h = Harness::shipped();
    let (mut s, _) = h.start();
    h.say(&mut s, "what is the weather");
    h.say(&mut s, "Chicago");
    let out = h.say(&mut s, "2017-03-02");
    assert_eq!(out.acts[0].value.value_class(), Some("weather.missing"));
}

#[test]
fn explicit_confirmation_affirmed() {
    let h = Harness::shipped();
    let (mut s, _) = h.start();
    h.say(&mut s, "what is the weather");
    let out = h.say(&mut s, "Atlantis");
    assert_eq!(out.kinds(), [DialogAct::ConfirmExplicit]);
    assert_eq!(out.acts[0].value, ActValue::text("Atlantis"));
    let out = h.say(&mut s, "yes");
    assert!(asks(&out, "date_time"), "{out}");
    assert!(s.beliefs.is_grounded("location"));
}

#[test]
fn explicit_confirmation_denied_asks_again() {
    let h = Harness::shipped();
    let (mut s, _) = h.start();
    h.say(&mut s, "what is the weather");
    h.say(&mut s, "Atlantis");
    let out = h.say(&mut s, "no");
    assert!(asks(&out, "location"), "{out}");
    assert_eq!(s.beliefs.entry("location", "value").unwrap().grounding, Grounding::Disconfirmed);
    assert!(asks(&h.say(&mut s, "Boston"), "date_time"));
}

#[test]
fn implicit_confirmation_retracted_by_no() {
    let h = Harness::shipped();
    let (mut s, _) = h.start();
    h.say(&mut s, "what is the weather");
    let out = h.say(&mut s, "Gotham");
    assert_eq!(out.kinds(), [DialogAct::ConfirmImplicit, DialogAct::Ask]);
    assert!(asks(&out, "date_time"));
    h.say(&mut s, "no");
    assert_eq!(s.beliefs.entry("location", "value").unwrap().grounding, Grounding::Disconfirmed);
}

#[test]
fn confidence_sweep_picks_the_right_confirmation() {
    for (conf, expect) in [
        (1.0, None),
        (0.8, None),
        (0.79, Some(DialogAct::ConfirmImplicit)),
        (0.4, Some(DialogAct::ConfirmImplicit)),
        (0.39, Some(DialogAct::ConfirmExplicit)),
        (0.05, Some(DialogAct::ConfirmExplicit)),
    ] {
        let lexicon = format!("{SHIPPED_LEXICON}\nentity Location@{conf}: Metropolis\n");
        let config = Config::shipped().unwrap();
        let h = Harness {
            engine: config.engine(Arc::new(config.directory())).unwrap(),
            lexicon: Lexicon::parse(&lexicon).unwrap(),
        };
        let (mut s, _) = h.start();
        h.say(&mut s, "what is the weather");
        let out = h.say(&mut s, "Metropolis");
        let confirm = out
            .acts
            .iter()
            .map(|a| a.act)
            .find(|a| matches!(a, DialogAct::ConfirmImplicit | DialogAct::ConfirmExplicit));
        assert_eq!(confirm, expect, "confidence {conf}: {out}");
    }
}

#[test]
fn non_understanding_ladder_and_chatbot() {
    let h = Harness::shipped();
    let (mut s, _) = h.start();
    assert_eq!(h.say(&mut s, "blorp zzz").kinds(), [DialogAct::Rephrase]);
    let second = h.say(&mut s, "blorp zzz");
    assert_eq!(second.kinds(), [DialogAct::Instruct]);
    assert_eq!(h.say(&mut s, "qwerty").kinds(), [DialogAct::Instruct]);
    let chat = h.say(&mut s, "who founded microsoft");
    assert_eq!(chat.kinds(), [DialogAct::Relay]);
    assert_eq!(chat.acts[0].value, ActValue::text("Microsoft was founded by Bill Gates and Paul Allen."));
    assert_eq!(s.failures(), 0);
    assert_eq!(h.say(&mut s, "blorp").kinds(), [DialogAct::Rephrase]);
    assert!(asks(&h.say(&mut s, "what is the weather"), "location"));
    assert_eq!(s.failures(), 0);
}

#[test]
fn handoff_relay_and_return() {
    let h = Harness::shipped();
    let (mut s, _) = h.start();
    let out = h.say(&mut s, "Recommend a restaurant in Pittsburgh");
    assert_eq!(out.kinds(), [DialogAct::Handoff, DialogAct::Relay]);
    assert_eq!(out.acts[0].value, ActValue::concept("bistro"));
    assert!(s.active_remote.is_some());
    // While the remote holds the floor even portal keywords are relayed.
    let out = h.say(&mut s, "what is the weather");
    assert_eq!(out.kinds(), [DialogAct::Relay]);
    assert_eq!(s.history.last().unwrap().relayed_to.as_deref(), Some("bistro"));
    h.say(&mut s, "thai");
    let out = h.say(&mut s, "cheap");
    assert_eq!(out.kinds(), [DialogAct::Relay, DialogAct::Ask]);
    assert!(s.active_remote.is_none());
    let report = &s.remote_reports[0].report;
    assert_eq!(report.user_texts(), ["what is the weather", "thai", "cheap"]);
}

#[test]
fn remote_abandoned_by_user() {
    let h = Harness::shipped();
    let (mut s, _) = h.start();
    h.say(&mut s, "find a restaurant");
    let out = h.say(&mut s, "never mind");
    assert_eq!(out.kinds(), [DialogAct::Relay, DialogAct::Ask]);
    assert_eq!(s.remote_reports[0].report.outcome, dialhub_core::protocol::Outcome::Abandoned);
}

#[test]
fn unreachable_remote_falls_back_to_ladder() {
    let mut config = Config::shipped().unwrap();
    config.set_endpoint("bistro", "inproc://nowhere").unwrap();
    let h = Harness::with_config(config);
    let (mut s, _) = h.start();
    let out = h.say(&mut s, "Recommend a restaurant");
    assert_eq!(out.kinds(), [DialogAct::Rephrase]);
    assert!(s.active_remote.is_none());
    assert!(asks(&h.say(&mut s, "what is the weather"), "location"));
}

#[test]
fn goodbye_ends_the_session() {
    let h = Harness::shipped();
    let (mut s, _) = h.start();
    assert_eq!(h.say(&mut s, "goodbye").kinds(), [DialogAct::Bye]);
    assert!(s.ended && s.stack.is_empty());
    let frame = nlu::parse("hello", &h.lexicon);
    assert_eq!(h.engine.run_turn(&mut s, &frame), Err(EngineError::SessionEnded));
}

#[test]
fn sessions_do_not_share_state() {
    let h = Harness::shipped();
    let (mut a, _) = h.start();
    let (mut b, _) = h.start();
    h.say(&mut a, "what is the weather");
    h.say(&mut a, "Boston");
    let out = h.say(&mut b, "what is the weather");
    assert!(asks(&out, "location"));
    assert!(a.beliefs.is_grounded("location"));
    assert!(!b.beliefs.is_grounded("location"));
}

#[test]
fn step_budget_is_enforced() {
    let config = Config::shipped().unwrap();
    let engine = config
        .engine(Arc::new(config.directory()))
        .unwrap()
        .with_settings(EngineSettings {
            step_budget: 2,
            ..EngineSettings::default()
        });
    match engine.start_session("t") {
        Err(EngineError::StepBudgetExceeded { budget: 2, .. }) => {}
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("budget not enforced"),
    }
}

fn tiny_ontology() -> Arc<Ontology> {
    let mut o = Ontology::new();
    o.add_concept(Concept::new("x", Pool::User).subscribe(Subscription::entity("X"))).unwrap();
    Arc::new(o)
}

#[test]
fn invalid_trees_are_rejected() {
    let dir = Arc::new(AgentDirectory::new());
    let unknown_concept = TaskTree::new(vec![NodeSpec::agent("root", "ask(nope)")], "root").unwrap();
    assert!(matches!(
        Engine::new(unknown_concept, tiny_ontology(), dir.clone()),
        Err(EngineError::InvalidTree(InvalidTree::Ontology { .. }))
    ));
    let no_remote = TaskTree::new(vec![NodeSpec::agent("root", "call_remote(x)")], "root").unwrap();
    assert!(Engine::new(no_remote, tiny_ontology(), dir).is_err());
    let cyclic = TaskTree::new(vec![NodeSpec::agency("a", &["b"]), NodeSpec::agency("b", &["a"])], "a");
    assert!(matches!(cyclic, Err(InvalidTree::Cycle(_))));
}
