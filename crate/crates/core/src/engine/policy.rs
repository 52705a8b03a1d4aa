//! Choice policies: pick one subtree among candidates.
//!
//! The same interface serves choice agencies and candidate tree selection.
//! The shipped policy is deterministic; a learned policy can be dropped in
//! behind [`ChoicePolicy`].

use super::tree::{TaskTree, Trigger};
use crate::nlu::SemanticFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub node: String,
    /// Evidence from the current frame, in [0, 1].
    pub score: f64,
    /// Registration position (file order for transformation candidates,
    /// child position for choice agencies).
    pub order: usize,
}

pub trait ChoicePolicy: Send + Sync {
    /// Index into `candidates` of the chosen one; `None` only when empty.
    fn choose(&self, candidates: &[Candidate]) -> Option<usize>;
}

/// Highest score wins; ties go to the earliest registration, then the name.
#[derive(Debug, Clone, Copy, Default)]
pub struct ArgmaxPolicy;

impl ChoicePolicy for ArgmaxPolicy {
    fn choose(&self, candidates: &[Candidate]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in candidates.iter().enumerate() {
            let better = match best {
                None => true,
                Some(b) => {
                    let b = &candidates[b];
                    c.score > b.score
                        || (c.score == b.score && (c.order, &c.node) < (b.order, &b.node))
                }
            };
            if better {
                best = Some(i);
            }
        }
        best
    }
}

/// Frame evidence for a node: the strongest of its triggers.
pub fn trigger_score(tree: &TaskTree, node: usize, frame: &SemanticFrame) -> f64 {
    tree.node(node)
        .triggers
        .iter()
        .map(|t| match t {
            Trigger::Domain(l) => frame.domain_prob(l),
            Trigger::Intent(l) => frame.intent_prob(l),
        })
        .fold(0.0, f64::max)
}
