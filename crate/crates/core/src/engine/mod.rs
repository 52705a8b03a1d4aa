//! The dialog engine: a stack of subtasks driven one user turn at a time.
//!
//! Each turn runs belief update, tree transformation and error handling,
//! then executes stack tops until the system needs the user again. While a
//! remote agent holds the floor, turns are relayed to it instead.

pub mod policy;
pub mod state;
pub mod tree;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::act::{Act, ActValue, DialogAct, SystemAction};
use crate::chatbot::{ChatResponder, DEFAULT_THRESHOLD};
use crate::nlu::SemanticFrame;
use crate::ontology::{AttrValue, Beliefs, Grounding, Ontology, OntologyError, Pool, Slot, DEFAULT_KEY};
use crate::protocol::knowledge::KnowledgeError;
use crate::protocol::{self, DialogReport, InitialState, Outcome, RemoteConnector};

pub use policy::{ArgmaxPolicy, Candidate, ChoicePolicy};
pub use state::{
    ActiveRemote, ConfirmMode, DialogState, FrameNode, FrameStatus, RemoteRecord, StackFrame, TurnRecord,
};
pub use tree::{Action, InvalidTree, NodeId, NodeKind, NodeSpec, TaskNode, TaskTree, Termination, Trigger};

pub const AFFIRM_INTENT: &str = "Affirm";
pub const NEGATE_INTENT: &str = "Negate";

/// Answers inform requests for one agent-pool concept.
pub trait KnowledgeSource: Send + Sync {
    /// Slots to inform, or `None` when there is nothing to report for the
    /// current beliefs.
    fn lookup(&self, concept: &str, beliefs: &Beliefs) -> Result<Option<BTreeMap<String, String>>, KnowledgeError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineSettings {
    /// Confidence at or above which a value is grounded without confirmation.
    pub ground_threshold: f64,
    /// Confidence below which confirmation is explicit rather than implicit.
    pub explicit_below: f64,
    /// Minimum trigger score for a transformation candidate.
    pub candidate_min: f64,
    /// Similarity the chatbot answer must strictly exceed.
    pub chat_threshold: f64,
    /// Stack steps allowed per turn.
    pub step_budget: usize,
    /// Text of the second and later non-understanding prompts.
    pub instructions: String,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            ground_threshold: 0.8,
            explicit_below: 0.4,
            candidate_min: 0.25,
            chat_threshold: DEFAULT_THRESHOLD,
            step_budget: 256,
            instructions: "I can tell you about the weather or find you a restaurant.".into(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid task tree: {0}")]
    InvalidTree(#[from] InvalidTree),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("session has ended")]
    SessionEnded,
    #[error("execution stack is empty")]
    EmptyStack,
    #[error("turn exceeded the step budget of {budget} (stack top: {top})")]
    StepBudgetExceeded { budget: usize, top: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    /// A primitive produced acts and the loop continues.
    Emitted(Vec<Act>),
    /// A primitive produced acts and now waits for the user.
    AwaitUser(Vec<Act>),
    SubtaskPushed(String),
    Popped(usize),
    /// The session is over.
    Ended(Vec<Act>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformOutcome {
    Pushed(String),
    NoCandidate,
}

pub type StepObserver = Arc<dyn Fn(&DialogState, &StepOutcome) + Send + Sync>;

pub struct Engine {
    tree: Arc<TaskTree>,
    ontology: Arc<Ontology>,
    knowledge: BTreeMap<String, Arc<dyn KnowledgeSource>>,
    connector: Arc<dyn RemoteConnector>,
    chatbot: Option<Arc<dyn ChatResponder>>,
    policy: Arc<dyn ChoicePolicy>,
    observer: Option<StepObserver>,
    settings: EngineSettings,
}

impl Engine {
    pub fn new(
        mut tree: TaskTree,
        ontology: Arc<Ontology>,
        connector: Arc<dyn RemoteConnector>,
    ) -> Result<Self, EngineError> {
        tree.bind(&ontology)?;
        Ok(Engine {
            tree: Arc::new(tree),
            ontology,
            knowledge: BTreeMap::new(),
            connector,
            chatbot: None,
            policy: Arc::new(ArgmaxPolicy),
            observer: None,
            settings: EngineSettings::default(),
        })
    }

    pub fn with_knowledge(mut self, concept: &str, source: Arc<dyn KnowledgeSource>) -> Self {
        self.knowledge.insert(concept.to_string(), source);
        self
    }

    pub fn with_chatbot(mut self, chatbot: Arc<dyn ChatResponder>) -> Self {
        self.chatbot = Some(chatbot);
        self
    }

    pub fn with_policy(mut self, policy: Arc<dyn ChoicePolicy>) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_settings(mut self, settings: EngineSettings) -> Self {
        self.settings = settings;
        self
    }

    /// Called after every stack step, for tracing and tests.
    pub fn with_observer(mut self, observer: StepObserver) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn tree(&self) -> &TaskTree {
        &self.tree
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn settings(&self) -> &EngineSettings {
        &self.settings
    }

    /// Pushes the root and runs it until it first needs the user.
    pub fn start_session(&self, session_id: &str) -> Result<(DialogState, SystemAction), EngineError> {
        let mut state = DialogState::new(session_id);
        state.push(FrameNode::Tree(self.tree.root()), None, None);
        self.execute_loop(&mut state)?;
        let acts = std::mem::take(&mut state.pending_actions);
        Ok((state, SystemAction::new(acts)))
    }

    pub fn run_turn(&self, state: &mut DialogState, frame: &SemanticFrame) -> Result<SystemAction, EngineError> {
        if state.ended {
            return Err(EngineError::SessionEnded);
        }
        state.pending_actions.clear();
        state.implicit_last_turn = std::mem::take(&mut state.implicit_this_turn);

        if let Some(active) = &state.active_remote {
            let concept = active.concept.clone();
            state.turn_count += 1;
            state.last_frame = Some(frame.clone());
            self.relay_to_remote(state, &frame.utterance)?;
            self.record(state, frame, Vec::new(), Some(concept));
            return Ok(SystemAction::new(state.pending_actions.clone()));
        }

        let touched = self.belief_update(state, frame);
        let consumed = self.resolve_confirmations(state, frame);
        let transformed = self.tree_transformation(state, frame);
        let understood = !touched.is_empty()
            || consumed
            || transformed != TransformOutcome::NoCandidate
            || self.recognized(frame);
        self.error_handle(state, frame, understood);
        if understood {
            state.failures = 0;
            self.execute_loop(state)?;
        }
        self.record(state, frame, touched, None);
        Ok(SystemAction::new(state.pending_actions.clone()))
    }

    fn record(&self, state: &mut DialogState, frame: &SemanticFrame, touched: Vec<Slot>, relayed_to: Option<String>) {
        let acts = state.pending_actions.clone();
        state.history.push(TurnRecord {
            turn: state.turn_count,
            utterance: frame.utterance.clone(),
            touched,
            relayed_to,
            acts,
        });
    }

    /// Counts the turn and writes the frame into the beliefs.
    pub fn belief_update(&self, state: &mut DialogState, frame: &SemanticFrame) -> Vec<Slot> {
        state.turn_count += 1;
        state.last_frame = Some(frame.clone());
        state.beliefs.apply_frame(&self.ontology, frame, state.turn_count)
    }

    /// Applies yes/no answers to a pending explicit confirmation, and a "no"
    /// to last turn's implicit confirmations. True if the input was used.
    fn resolve_confirmations(&self, state: &mut DialogState, frame: &SemanticFrame) -> bool {
        let affirm = frame.has_intent(AFFIRM_INTENT, ontology_min());
        let negate = frame.has_intent(NEGATE_INTENT, ontology_min());
        if !affirm && !negate {
            return false;
        }
        let turn = state.turn_count;
        let stale = |beliefs: &Beliefs, (c, k): &Slot| beliefs.entry(c, k).is_some_and(|e| e.turn_updated < turn);
        let mut consumed = false;

        let pending = state.stack.iter().rev().find_map(|f| {
            if f.status != FrameStatus::Waiting {
                return None;
            }
            match &f.node {
                FrameNode::Confirm {
                    concept,
                    key,
                    mode: ConfirmMode::Explicit,
                    ..
                } => Some((concept.clone(), key.clone())),
                FrameNode::Tree(id) => match &self.tree.node(*id).action {
                    Some(Action::Confirm(c)) => Some((c.clone(), DEFAULT_KEY.to_string())),
                    _ => None,
                },
                _ => None,
            }
        });
        if let Some(slot) = pending {
            if stale(&state.beliefs, &slot) {
                let g = if affirm { Grounding::Grounded } else { Grounding::Disconfirmed };
                state.beliefs.set_grounding(&slot.0, &slot.1, g);
                consumed = true;
            }
        }
        if negate && !consumed {
            for slot in state.implicit_last_turn.clone() {
                let grounded = state
                    .beliefs
                    .entry(&slot.0, &slot.1)
                    .is_some_and(|e| e.grounding == Grounding::Grounded);
                if grounded && stale(&state.beliefs, &slot) {
                    state.beliefs.set_grounding(&slot.0, &slot.1, Grounding::Disconfirmed);
                    consumed = true;
                }
            }
        }
        consumed
    }

    /// True when some registered subtree matches the frame, whether or not it
    /// is already on the stack.
    fn recognized(&self, frame: &SemanticFrame) -> bool {
        self.tree
            .registered()
            .iter()
            .any(|&n| policy::trigger_score(&self.tree, n, frame) >= self.settings.candidate_min)
    }

    /// Pushes the best matching registered subtree that is not already on
    /// the stack.
    pub fn tree_transformation(&self, state: &mut DialogState, frame: &SemanticFrame) -> TransformOutcome {
        let registered = self.tree.registered();
        let mut ids = Vec::new();
        let mut candidates = Vec::new();
        for (order, &node) in registered.iter().enumerate() {
            let score = policy::trigger_score(&self.tree, node, frame);
            if score >= self.settings.candidate_min && !state.has_tree_node(node) {
                ids.push(node);
                candidates.push(Candidate {
                    node: self.tree.node(node).id.clone(),
                    score,
                    order,
                });
            }
        }
        match self.policy.choose(&candidates) {
            Some(i) => {
                state.push(FrameNode::Tree(ids[i]), None, None);
                TransformOutcome::Pushed(candidates[i].node.clone())
            }
            None => TransformOutcome::NoCandidate,
        }
    }

    /// Misunderstanding handling always runs: confident values are grounded,
    /// the rest get a confirmation subtask. Non-understanding handling runs
    /// when the turn was not understood.
    pub fn error_handle(&self, state: &mut DialogState, frame: &SemanticFrame, understood: bool) {
        let pending = state.beliefs.ungrounded_updated(&self.ontology);
        let mut to_push = Vec::new();
        for (concept, key) in pending {
            let Some(entry) = state.beliefs.entry(&concept, &key) else {
                continue;
            };
            if entry.confidence >= self.settings.ground_threshold {
                state.beliefs.set_grounding(&concept, &key, Grounding::Grounded);
                continue;
            }
            let mode = if entry.confidence >= self.settings.explicit_below {
                ConfirmMode::Implicit
            } else {
                ConfirmMode::Explicit
            };
            let value = entry.value.as_ref().map(AttrValue::to_string).unwrap_or_default();
            let already = state.stack.iter().any(|f| {
                matches!(&f.node, FrameNode::Confirm { concept: c, key: k, value: v, .. }
                    if *c == concept && *k == key && *v == value)
            });
            if !already {
                to_push.push(FrameNode::Confirm {
                    concept,
                    key,
                    mode,
                    value,
                });
            }
        }
        // Push in reverse so the oldest update is confirmed first.
        for node in to_push.into_iter().rev() {
            state.push(node, None, None);
        }

        if !understood {
            let answer = self
                .chatbot
                .as_ref()
                .and_then(|bot| bot.respond(&frame.utterance, self.settings.chat_threshold));
            let act = match answer {
                Some(m) => {
                    state.failures = 0;
                    Act::new(DialogAct::Relay, ActValue::text(m.response))
                }
                None => self.ladder(state),
            };
            state.pending_actions.push(act);
        }
    }

    fn ladder(&self, state: &mut DialogState) -> Act {
        state.failures += 1;
        if state.failures == 1 {
            Act::bare(DialogAct::Rephrase)
        } else {
            Act::new(DialogAct::Instruct, ActValue::text(self.settings.instructions.clone()))
        }
    }

    /// Executes stack tops until a primitive needs the user, the session
    /// ends, or the step budget runs out.
    fn execute_loop(&self, state: &mut DialogState) -> Result<(), EngineError> {
        let mut steps = 0;
        loop {
            if state.ended {
                return Ok(());
            }
            if state.stack.is_empty() {
                state.ended = true;
                return Ok(());
            }
            if steps == self.settings.step_budget {
                let top = state.top().map(|f| self.describe(&f.node)).unwrap_or_default();
                return Err(EngineError::StepBudgetExceeded {
                    budget: self.settings.step_budget,
                    top,
                });
            }
            steps += 1;
            match self.execute_top(state)? {
                StepOutcome::Emitted(acts) => state.pending_actions.extend(acts),
                StepOutcome::AwaitUser(acts) => {
                    state.pending_actions.extend(acts);
                    return Ok(());
                }
                StepOutcome::Ended(acts) => {
                    state.pending_actions.extend(acts);
                    state.stack.clear();
                    state.ended = true;
                    return Ok(());
                }
                StepOutcome::SubtaskPushed(_) | StepOutcome::Popped(_) => {}
            }
        }
    }

    fn describe(&self, node: &FrameNode) -> String {
        match node {
            FrameNode::Tree(id) => self.tree.node(*id).id.clone(),
            FrameNode::Confirm { concept, key, .. } => format!("confirm({concept}.{key})"),
        }
    }

    fn terminated(&self, state: &DialogState, frame: &StackFrame) -> bool {
        match &frame.node {
            FrameNode::Confirm { concept, key, value, .. } => match state.beliefs.entry(concept, key) {
                Some(e) => {
                    e.grounding != Grounding::Updated
                        || e.value.as_ref().map(AttrValue::to_string).as_deref() != Some(value.as_str())
                }
                None => true,
            },
            FrameNode::Tree(id) => match &self.tree.node(*id).termination {
                Termination::AllGrounded(c) => state.beliefs.is_grounded(c),
                Termination::Informed(c) => state.informed_since(c, frame.pushed_at),
                Termination::RemoteEnded => state.remote_done.contains(&frame.uid),
                Termination::Always => true,
                Termination::Never => false,
            },
        }
    }

    /// One step: pop every frame whose termination predicate holds (with its
    /// descendants), otherwise advance the top frame.
    pub fn execute_top(&self, state: &mut DialogState) -> Result<StepOutcome, EngineError> {
        let outcome = self.step(state)?;
        if let Some(observer) = &self.observer {
            observer(state, &outcome);
        }
        Ok(outcome)
    }

    fn step(&self, state: &mut DialogState) -> Result<StepOutcome, EngineError> {
        if state.stack.is_empty() {
            return Err(EngineError::EmptyStack);
        }
        let terminated: BTreeSet<u64> = state
            .stack
            .iter()
            .filter(|f| self.terminated(state, f))
            .map(|f| f.uid)
            .collect();
        if !terminated.is_empty() {
            let n = state.remove_with_descendants(&terminated);
            if let Some(active) = &state.active_remote {
                if state.frame(active.frame_uid).is_none() {
                    state.active_remote = None;
                }
            }
            return Ok(StepOutcome::Popped(n));
        }

        let top = state.stack.len() - 1;
        let frame = state.stack[top].clone();
        match &frame.node {
            FrameNode::Confirm { concept, key, mode, value } => {
                if frame.status == FrameStatus::Executed {
                    state.stack.pop();
                    return Ok(StepOutcome::Popped(1));
                }
                match mode {
                    ConfirmMode::Implicit => {
                        state.beliefs.set_grounding(concept, key, Grounding::Grounded);
                        state.implicit_this_turn.push((concept.clone(), key.clone()));
                        state.stack[top].status = FrameStatus::Executed;
                        Ok(StepOutcome::Emitted(vec![Act::new(
                            DialogAct::ConfirmImplicit,
                            ActValue::text(value.clone()),
                        )]))
                    }
                    ConfirmMode::Explicit => {
                        state.stack[top].status = FrameStatus::Waiting;
                        Ok(StepOutcome::AwaitUser(vec![Act::new(
                            DialogAct::ConfirmExplicit,
                            ActValue::text(value.clone()),
                        )]))
                    }
                }
            }
            FrameNode::Tree(id) => {
                let node = self.tree.node(*id);
                match node.kind {
                    NodeKind::Agency => {
                        if frame.next_child < node.children.len() {
                            let idx = frame.next_child;
                            let child = node.children[idx];
                            state.stack[top].next_child += 1;
                            state.push(FrameNode::Tree(child), Some(frame.uid), Some(idx));
                            Ok(StepOutcome::SubtaskPushed(self.tree.node(child).id.clone()))
                        } else {
                            state.stack.pop();
                            Ok(StepOutcome::Popped(1))
                        }
                    }
                    NodeKind::ChoiceAgency => {
                        if frame.status != FrameStatus::Fresh {
                            state.stack.pop();
                            return Ok(StepOutcome::Popped(1));
                        }
                        let empty = SemanticFrame::default();
                        let context = state.last_frame.as_ref().unwrap_or(&empty);
                        let candidates: Vec<Candidate> = node
                            .children
                            .iter()
                            .enumerate()
                            .map(|(order, &c)| Candidate {
                                node: self.tree.node(c).id.clone(),
                                score: policy::trigger_score(&self.tree, c, context),
                                order,
                            })
                            .collect();
                        let idx = self.policy.choose(&candidates).unwrap_or(0);
                        let child = node.children[idx];
                        state.stack[top].status = FrameStatus::Executed;
                        state.stack[top].next_child = idx + 1;
                        state.push(FrameNode::Tree(child), Some(frame.uid), Some(idx));
                        Ok(StepOutcome::SubtaskPushed(self.tree.node(child).id.clone()))
                    }
                    NodeKind::Agent => {
                        if frame.status == FrameStatus::Executed {
                            state.stack.pop();
                            return Ok(StepOutcome::Popped(1));
                        }
                        let action = node.action.clone().expect("validated: agents have actions");
                        Ok(self.perform(state, top, &action))
                    }
                }
            }
        }
    }

    fn perform(&self, state: &mut DialogState, top: usize, action: &Action) -> StepOutcome {
        let uid = state.stack[top].uid;
        match action {
            Action::Emit(act, value) => {
                state.stack[top].status = FrameStatus::Executed;
                let value = value.clone().map(ActValue::text).unwrap_or(ActValue::None);
                let acts = vec![Act::new(*act, value)];
                if *act == DialogAct::Bye {
                    StepOutcome::Ended(acts)
                } else {
                    StepOutcome::Emitted(acts)
                }
            }
            Action::Ask(c) => {
                state.stack[top].status = FrameStatus::Waiting;
                StepOutcome::AwaitUser(vec![Act::new(DialogAct::Ask, ActValue::concept(c))])
            }
            Action::Confirm(c) => match state.beliefs.entry(c, DEFAULT_KEY) {
                Some(e) if e.grounding == Grounding::Updated => {
                    let value = e.value.as_ref().map(AttrValue::to_string).unwrap_or_default();
                    state.stack[top].status = FrameStatus::Waiting;
                    StepOutcome::AwaitUser(vec![Act::new(DialogAct::ConfirmExplicit, ActValue::text(value))])
                }
                _ => {
                    state.stack[top].status = FrameStatus::Executed;
                    StepOutcome::Emitted(Vec::new())
                }
            },
            Action::InformFromKnowledge(c) => self.inform(state, top, c),
            Action::CallRemote(c) => self.open_remote(state, uid, c),
        }
    }

    fn inform(&self, state: &mut DialogState, top: usize, concept: &str) -> StepOutcome {
        let unmet = match state.beliefs.unmet_dependencies(&self.ontology, concept) {
            Ok(u) => u,
            Err(e) => {
                log::error!("inform({concept}): {e}");
                Vec::new()
            }
        };
        if let Some(first) = unmet.first() {
            state.stack[top].status = FrameStatus::Waiting;
            return StepOutcome::AwaitUser(vec![Act::new(DialogAct::Ask, ActValue::concept(first.clone()))]);
        }
        let answer = match self.knowledge.get(concept) {
            Some(source) => source.lookup(concept, &state.beliefs).unwrap_or_else(|e| {
                log::warn!("knowledge lookup for `{concept}` failed: {e}");
                None
            }),
            None => {
                log::warn!("no knowledge source for `{concept}`");
                None
            }
        };
        let turn = state.turn_count;
        let value = match answer {
            Some(slots) => {
                for (k, v) in &slots {
                    state.beliefs.set_known(concept, k, AttrValue::Text(v.clone()), turn);
                }
                ActValue::Filled {
                    class: concept.to_string(),
                    slots,
                }
            }
            None => {
                let slots = self
                    .ontology
                    .transitive_deps(concept)
                    .into_iter()
                    .filter_map(|d| state.beliefs.value(&d).map(|v| (d.clone(), v.to_string())))
                    .collect();
                ActValue::Filled {
                    class: format!("{concept}.missing"),
                    slots,
                }
            }
        };
        let at = state.tick();
        state.informed.insert(concept.to_string(), at);
        state.stack[top].status = FrameStatus::Executed;
        StepOutcome::Emitted(vec![Act::new(DialogAct::Inform, value)])
    }

    /// Grounded user-pool values, offered to remote agents so they can skip
    /// questions already answered.
    pub fn initial_state(&self, state: &DialogState) -> InitialState {
        let mut s0 = InitialState::default();
        for name in self.ontology.pool(Pool::User) {
            if let Some(e) = state.beliefs.entry(name, DEFAULT_KEY) {
                if let (Grounding::Grounded, Some(v)) = (e.grounding, &e.value) {
                    s0 = s0.with_slot(name, &v.to_string(), e.confidence);
                }
            }
        }
        s0
    }

    fn open_remote(&self, state: &mut DialogState, uid: u64, concept: &str) -> StepOutcome {
        let endpoint = self
            .ontology
            .get(concept)
            .and_then(|c| c.endpoint.clone())
            .expect("validated: call_remote concepts have endpoints");
        let s0 = self.initial_state(state);
        let opened = self
            .connector
            .connect(&endpoint)
            .and_then(|agent| protocol::new_call(agent.as_ref(), concept, &endpoint, &state.session_id, &s0));
        match opened {
            Ok((session, reply)) => {
                log::info!("session {}: handoff to `{concept}`", state.session_id);
                if let Some(f) = state.stack.iter_mut().find(|f| f.uid == uid) {
                    f.status = FrameStatus::Waiting;
                }
                state.active_remote = Some(ActiveRemote {
                    concept: concept.to_string(),
                    session,
                    frame_uid: uid,
                });
                StepOutcome::AwaitUser(vec![
                    Act::new(DialogAct::Handoff, ActValue::concept(concept)),
                    Act::new(DialogAct::Relay, ActValue::text(reply)),
                ])
            }
            Err(e) => {
                log::warn!("session {}: remote `{concept}` failed to open: {e}", state.session_id);
                state.remove_with_descendants(&BTreeSet::from([uid]));
                StepOutcome::AwaitUser(vec![self.ladder(state)])
            }
        }
    }

    /// Forwards one utterance to the active remote agent. When the agent ends
    /// its session, its report is kept and the stack resumes.
    pub fn relay_to_remote(&self, state: &mut DialogState, utterance: &str) -> Result<(), EngineError> {
        let Some(mut active) = state.active_remote.take() else {
            return Ok(());
        };
        let result = self
            .connector
            .connect(&active.session.endpoint)
            .and_then(|agent| protocol::next(agent.as_ref(), &mut active.session, utterance));
        match result {
            Ok(out) => {
                if !out.reply.is_empty() {
                    state
                        .pending_actions
                        .push(Act::new(DialogAct::Relay, ActValue::text(out.reply)));
                }
                if !out.ended {
                    state.active_remote = Some(active);
                    return Ok(());
                }
                let report = out
                    .report
                    .unwrap_or_else(|| missing_report(&active.session.session_token, "missing"));
                log::info!(
                    "session {}: `{}` ended with outcome {:?}",
                    state.session_id,
                    active.concept,
                    report.outcome
                );
                state.remote_reports.push(RemoteRecord {
                    concept: active.concept,
                    report,
                    turn: state.turn_count,
                });
                state.remote_done.insert(active.frame_uid);
                state.failures = 0;
                self.execute_loop(state)
            }
            Err(e) => {
                log::warn!("session {}: remote `{}` failed: {e}", state.session_id, active.concept);
                state.remove_with_descendants(&BTreeSet::from([active.frame_uid]));
                let act = self.ladder(state);
                state.pending_actions.push(act);
                Ok(())
            }
        }
    }

    /// Ends an open remote session from the portal side by relaying
    /// `sentinel` once. The outcome is recorded whatever the agent answers.
    pub fn close_remote(&self, state: &mut DialogState, sentinel: &str) -> Option<RemoteRecord> {
        let mut active = state.active_remote.take()?;
        let result = self
            .connector
            .connect(&active.session.endpoint)
            .and_then(|agent| protocol::next(agent.as_ref(), &mut active.session, sentinel));
        let report = match result {
            Ok(out) if out.ended => out
                .report
                .unwrap_or_else(|| missing_report(&active.session.session_token, "missing")),
            Ok(_) => {
                let mut r = missing_report(&active.session.session_token, "closed_by_portal");
                r.outcome = Outcome::Abandoned;
                r
            }
            Err(e) => {
                log::warn!("closing remote `{}` failed: {e}", active.concept);
                missing_report(&active.session.session_token, "close_failed")
            }
        };
        state.remove_with_descendants(&BTreeSet::from([active.frame_uid]));
        let record = RemoteRecord {
            concept: active.concept,
            report,
            turn: state.turn_count,
        };
        state.remote_reports.push(record.clone());
        Some(record)
    }
}

fn ontology_min() -> f64 {
    crate::ontology::LABEL_MATCH_MIN
}

fn missing_report(token: &str, reason: &str) -> DialogReport {
    let mut extras = BTreeMap::new();
    extras.insert(reason.to_string(), serde_json::Value::Bool(true));
    DialogReport {
        session_token: token.to_string(),
        turns: Vec::new(),
        outcome: Outcome::Error,
        extras,
    }
}
