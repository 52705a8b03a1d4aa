//! Per-session dialog state: the execution stack plus everything the
//! termination predicates and error handlers read.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::tree::NodeId;
use crate::act::Act;
use crate::nlu::SemanticFrame;
use crate::ontology::{Beliefs, Slot};
use crate::protocol::{AgentSession, DialogReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfirmMode {
    Implicit,
    Explicit,
}

/// What a stack frame executes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameNode {
    Tree(NodeId),
    /// Pushed by misunderstanding handling for one pending slot.
    Confirm {
        concept: String,
        key: String,
        mode: ConfirmMode,
        /// The value under confirmation; a different value ends the frame.
        value: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameStatus {
    /// Not executed yet.
    Fresh,
    /// A non-blocking action (or a choice) ran; the frame pops next.
    Executed,
    /// A blocking action ran and the frame awaits user input.
    Waiting,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackFrame {
    /// Unique within the session.
    pub uid: u64,
    /// The frame that pushed this one; `None` for the root and for frames
    /// pushed by tree transformation or error handling.
    pub parent: Option<u64>,
    /// Position among the parent's children.
    pub child_index: Option<usize>,
    pub node: FrameNode,
    /// Next child an agency will push.
    pub next_child: usize,
    /// Event clock value when the frame was pushed.
    pub pushed_at: u64,
    pub status: FrameStatus,
}

/// An open remote session and the frame that opened it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveRemote {
    pub concept: String,
    pub session: AgentSession,
    pub frame_uid: u64,
}

/// A finished remote session, as reported by the agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemoteRecord {
    pub concept: String,
    pub report: DialogReport,
    /// The turn on which the session ended.
    pub turn: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnRecord {
    pub turn: u32,
    pub utterance: String,
    pub touched: Vec<Slot>,
    /// The remote agent the utterance was relayed to, if any.
    pub relayed_to: Option<String>,
    pub acts: Vec<Act>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DialogState {
    pub session_id: String,
    /// User inputs processed so far.
    pub turn_count: u32,
    pub stack: Vec<StackFrame>,
    pub beliefs: Beliefs,
    pub last_frame: Option<SemanticFrame>,
    pub active_remote: Option<ActiveRemote>,
    /// Acts produced so far in the turn being processed.
    pub pending_actions: Vec<Act>,
    pub history: Vec<TurnRecord>,
    pub remote_reports: Vec<RemoteRecord>,
    pub ended: bool,
    pub(crate) clock: u64,
    pub(crate) next_uid: u64,
    /// Concept -> clock value of its latest inform.
    pub(crate) informed: BTreeMap<String, u64>,
    /// Frames whose remote session has ended.
    pub(crate) remote_done: BTreeSet<u64>,
    /// Consecutive non-understood turns.
    pub(crate) failures: u32,
    /// Slots implicitly confirmed on the previous turn; a negation retracts them.
    pub(crate) implicit_last_turn: Vec<Slot>,
    pub(crate) implicit_this_turn: Vec<Slot>,
}

impl DialogState {
    pub fn new(session_id: &str) -> Self {
        DialogState {
            session_id: session_id.to_string(),
            turn_count: 0,
            stack: Vec::new(),
            beliefs: Beliefs::new(),
            last_frame: None,
            active_remote: None,
            pending_actions: Vec::new(),
            history: Vec::new(),
            remote_reports: Vec::new(),
            ended: false,
            clock: 0,
            next_uid: 0,
            informed: BTreeMap::new(),
            remote_done: BTreeSet::new(),
            failures: 0,
            implicit_last_turn: Vec::new(),
            implicit_this_turn: Vec::new(),
        }
    }

    pub(crate) fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub(crate) fn push(&mut self, node: FrameNode, parent: Option<u64>, child_index: Option<usize>) -> u64 {
        let uid = self.next_uid;
        self.next_uid += 1;
        let pushed_at = self.tick();
        self.stack.push(StackFrame {
            uid,
            parent,
            child_index,
            node,
            next_child: 0,
            pushed_at,
            status: FrameStatus::Fresh,
        });
        uid
    }

    pub fn top(&self) -> Option<&StackFrame> {
        self.stack.last()
    }

    pub fn frame(&self, uid: u64) -> Option<&StackFrame> {
        self.stack.iter().find(|f| f.uid == uid)
    }

    pub fn has_tree_node(&self, node: NodeId) -> bool {
        self.stack.iter().any(|f| f.node == FrameNode::Tree(node))
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    /// Removes the given frames and, transitively, every frame they pushed.
    /// Returns how many frames were removed.
    pub(crate) fn remove_with_descendants(&mut self, roots: &BTreeSet<u64>) -> usize {
        let mut doomed = roots.clone();
        // Children always sit above their parents, so one upward pass suffices.
        for f in &self.stack {
            if f.parent.is_some_and(|p| doomed.contains(&p)) {
                doomed.insert(f.uid);
            }
        }
        let before = self.stack.len();
        self.stack.retain(|f| !doomed.contains(&f.uid));
        self.remote_done.retain(|u| !doomed.contains(u));
        before - self.stack.len()
    }

    /// Consecutive non-understood turns so far.
    pub fn failures(&self) -> u32 {
        self.failures
    }

    /// True when `concept` was informed after the event clock read `since`.
    pub fn informed_since(&self, concept: &str, since: u64) -> bool {
        self.informed.get(concept).is_some_and(|&t| t > since)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cascade_removes_descendants_only() {
        let mut s = DialogState::new("t");
        let root = s.push(FrameNode::Tree(0), None, None);
        let a = s.push(FrameNode::Tree(1), Some(root), Some(0));
        let _a1 = s.push(FrameNode::Tree(2), Some(a), Some(0));
        let c = s.push(
            FrameNode::Confirm {
                concept: "x".into(),
                key: "value".into(),
                mode: ConfirmMode::Implicit,
                value: "v".into(),
            },
            None,
            None,
        );
        let removed = s.remove_with_descendants(&BTreeSet::from([a]));
        assert_eq!(removed, 2);
        let left: Vec<u64> = s.stack.iter().map(|f| f.uid).collect();
        assert_eq!(left, [root, c]);
    }

    #[test]
    fn clock_orders_pushes() {
        let mut s = DialogState::new("t");
        s.push(FrameNode::Tree(0), None, None);
        s.push(FrameNode::Tree(1), None, None);
        assert!(s.stack[0].pushed_at < s.stack[1].pushed_at);
    }
}
