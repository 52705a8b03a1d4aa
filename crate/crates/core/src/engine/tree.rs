//! Task trees: subtasks with termination predicates, loaded from TOML.
//!
//! ```toml
//! root = "root"
//!
//! [[nodes]]
//! id = "root"
//! kind = "agency"
//! children = ["greet", "ask_goal"]
//!
//! [[nodes]]
//! id = "ask_goal"
//! kind = "agent"
//! action = "ask(user_goal)"
//! termination = "never"
//!
//! [[nodes]]
//! id = "weather"
//! kind = "agency"
//! children = ["ask_location", "ask_date", "inform_weather"]
//! termination = "informed(weather)"
//! triggers = ["domain:Weather"]
//! ```
//!
//! Nodes with `triggers` (and every `call_remote` node, which inherits the
//! remote concept's domains) are registered for tree transformation in file
//! order.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::act::DialogAct;
use crate::ontology::{Ontology, Pool};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// Runs its children left to right.
    Agency,
    /// Runs one child picked by the choice policy.
    ChoiceAgency,
    /// A primitive action.
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Termination {
    /// Every attribute of the concept is grounded.
    AllGrounded(String),
    /// The concept was informed after the frame was pushed.
    Informed(String),
    /// The remote session opened by this frame has ended.
    RemoteEnded,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Emit(DialogAct, Option<String>),
    /// Asks for a concept and waits for the user.
    Ask(String),
    InformFromKnowledge(String),
    CallRemote(String),
    /// Explicitly confirms a concept's pending value.
    Confirm(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Trigger {
    Domain(String),
    Intent(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum InvalidTree {
    #[error("tree file: {0}")]
    Parse(String),
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("node `{node}` references unknown child `{child}`")]
    UnknownChild { node: String, child: String },
    #[error("unknown root `{0}`")]
    UnknownRoot(String),
    #[error("node `{0}`: {1}")]
    Shape(String, String),
    #[error("cycle through node `{0}`")]
    Cycle(String),
    #[error("node `{node}` refers to {problem}")]
    Ontology { node: String, problem: String },
}

fn call_parts(s: &str) -> Option<(&str, Vec<&str>)> {
    let s = s.trim();
    match s.split_once('(') {
        None => Some((s, Vec::new())),
        Some((name, rest)) => {
            let args = rest.strip_suffix(')')?;
            let args = args
                .split(',')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .collect();
            Some((name.trim(), args))
        }
    }
}

impl FromStr for Termination {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unknown termination predicate `{s}`");
        let (name, args) = call_parts(s).ok_or_else(bad)?;
        match (name, args.as_slice()) {
            ("all_grounded", [c]) => Ok(Termination::AllGrounded(c.to_string())),
            ("informed", [c]) => Ok(Termination::Informed(c.to_string())),
            ("remote_ended", []) => Ok(Termination::RemoteEnded),
            ("always", []) => Ok(Termination::Always),
            ("never", []) => Ok(Termination::Never),
            _ => Err(bad()),
        }
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unknown action `{s}`");
        let (name, args) = call_parts(s).ok_or_else(bad)?;
        match (name, args.as_slice()) {
            ("emit", [act]) => Ok(Action::Emit(act.parse()?, None)),
            ("emit", [act, value]) => Ok(Action::Emit(act.parse()?, Some(value.to_string()))),
            ("ask", [c]) => Ok(Action::Ask(c.to_string())),
            ("inform_from_knowledge", [c]) => Ok(Action::InformFromKnowledge(c.to_string())),
            ("call_remote", [c]) => Ok(Action::CallRemote(c.to_string())),
            ("confirm", [c]) => Ok(Action::Confirm(c.to_string())),
            _ => Err(bad()),
        }
    }
}

impl FromStr for Trigger {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().split_once(':') {
            Some(("domain", l)) if !l.trim().is_empty() => Ok(Trigger::Domain(l.trim().to_string())),
            Some(("intent", l)) if !l.trim().is_empty() => Ok(Trigger::Intent(l.trim().to_string())),
            _ => Err(format!("trigger `{s}` is not `domain:LABEL` or `intent:LABEL`")),
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::AllGrounded(c) => write!(f, "all_grounded({c})"),
            Termination::Informed(c) => write!(f, "informed({c})"),
            Termination::RemoteEnded => f.write_str("remote_ended"),
            Termination::Always => f.write_str("always"),
            Termination::Never => f.write_str("never"),
        }
    }
}

/// Declarative form of one node, as written in the tree file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub children: Vec<String>,
    #[serde(default)]
    pub termination: Option<String>,
    #[serde(default)]
    pub action: Option<String>,
    #[serde(default)]
    pub triggers: Vec<String>,
}

impl NodeSpec {
    pub fn agency(id: &str, children: &[&str]) -> Self {
        Self::composite(id, NodeKind::Agency, children)
    }

    pub fn choice(id: &str, children: &[&str]) -> Self {
        Self::composite(id, NodeKind::ChoiceAgency, children)
    }

    fn composite(id: &str, kind: NodeKind, children: &[&str]) -> Self {
        NodeSpec {
            id: id.to_string(),
            kind,
            children: children.iter().map(|c| c.to_string()).collect(),
            termination: None,
            action: None,
            triggers: Vec::new(),
        }
    }

    pub fn agent(id: &str, action: &str) -> Self {
        NodeSpec {
            id: id.to_string(),
            kind: NodeKind::Agent,
            children: Vec::new(),
            termination: None,
            action: Some(action.to_string()),
            triggers: Vec::new(),
        }
    }

    pub fn until(mut self, termination: &str) -> Self {
        self.termination = Some(termination.to_string());
        self
    }

    pub fn on(mut self, trigger: &str) -> Self {
        self.triggers.push(trigger.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub id: String,
    pub kind: NodeKind,
    pub children: Vec<NodeId>,
    pub termination: Termination,
    pub action: Option<Action>,
    pub triggers: Vec<Trigger>,
}

#[derive(Debug, Deserialize)]
struct TreeFile {
    root: String,
    nodes: Vec<NodeSpec>,
}

/// An immutable, validated task tree. Shared subtrees are allowed; cycles
/// are not.
#[derive(Debug, Clone)]
pub struct TaskTree {
    nodes: Vec<TaskNode>,
    index: HashMap<String, NodeId>,
    root: NodeId,
    registered: Vec<NodeId>,
}

impl TaskTree {
    pub fn new(specs: Vec<NodeSpec>, root: &str) -> Result<Self, InvalidTree> {
        let mut index = HashMap::new();
        for (i, s) in specs.iter().enumerate() {
            if index.insert(s.id.clone(), i).is_some() {
                return Err(InvalidTree::DuplicateId(s.id.clone()));
            }
        }
        let root = *index
            .get(root)
            .ok_or_else(|| InvalidTree::UnknownRoot(root.to_string()))?;
        let mut nodes = Vec::with_capacity(specs.len());
        for s in &specs {
            let shape = |msg: &str| InvalidTree::Shape(s.id.clone(), msg.to_string());
            let children = s
                .children
                .iter()
                .map(|c| {
                    index.get(c).copied().ok_or_else(|| InvalidTree::UnknownChild {
                        node: s.id.clone(),
                        child: c.clone(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            match s.kind {
                NodeKind::Agent if !children.is_empty() => return Err(shape("an agent cannot have children")),
                NodeKind::Agent if s.action.is_none() => return Err(shape("an agent needs an action")),
                NodeKind::Agency | NodeKind::ChoiceAgency if children.is_empty() => {
                    return Err(shape("an agency needs at least one child"))
                }
                NodeKind::Agency | NodeKind::ChoiceAgency if s.action.is_some() => {
                    return Err(shape("only agents carry actions"))
                }
                _ => {}
            }
            let termination = match &s.termination {
                Some(t) => t.parse().map_err(|e: String| shape(&e))?,
                None => Termination::Never,
            };
            let action = s
                .action
                .as_deref()
                .map(str::parse)
                .transpose()
                .map_err(|e: String| shape(&e))?;
            let triggers = s
                .triggers
                .iter()
                .map(|t| t.parse())
                .collect::<Result<Vec<Trigger>, _>>()
                .map_err(|e| shape(&e))?;
            nodes.push(TaskNode {
                id: s.id.clone(),
                kind: s.kind,
                children,
                termination,
                action,
                triggers,
            });
        }
        let tree = TaskTree {
            nodes,
            index,
            root,
            registered: Vec::new(),
        };
        tree.check_acyclic()?;
        Ok(tree)
    }

    pub fn from_toml(source: &str) -> Result<Self, InvalidTree> {
        let file: TreeFile = toml::from_str(source).map_err(|e| InvalidTree::Parse(e.to_string()))?;
        Self::new(file.nodes, &file.root)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InvalidTree> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| InvalidTree::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn check_acyclic(&self) -> Result<(), InvalidTree> {
        // 0 = unvisited, 1 = on the current path, 2 = done
        fn visit(tree: &TaskTree, n: NodeId, mark: &mut [u8]) -> Result<(), InvalidTree> {
            match mark[n] {
                1 => return Err(InvalidTree::Cycle(tree.nodes[n].id.clone())),
                2 => return Ok(()),
                _ => {}
            }
            mark[n] = 1;
            for &c in &tree.nodes[n].children {
                visit(tree, c, mark)?;
            }
            mark[n] = 2;
            Ok(())
        }
        let mut mark = vec![0u8; self.nodes.len()];
        for n in 0..self.nodes.len() {
            visit(self, n, &mut mark)?;
        }
        Ok(())
    }

    /// Checks concept references against the ontology and registers the
    /// transformation candidates. `call_remote` nodes without triggers take
    /// the remote concept's domains.
    pub fn bind(&mut self, ontology: &Ontology) -> Result<(), InvalidTree> {
        let mut registered = Vec::new();
        for (id, node) in self.nodes.iter_mut().enumerate() {
            let problem = |problem: String| InvalidTree::Ontology {
                node: node.id.clone(),
                problem,
            };
            let mut concepts: Vec<&str> = Vec::new();
            match &node.termination {
                Termination::AllGrounded(c) | Termination::Informed(c) => concepts.push(c),
                _ => {}
            }
            match &node.action {
                Some(Action::Ask(c) | Action::InformFromKnowledge(c) | Action::Confirm(c)) => concepts.push(c),
                Some(Action::CallRemote(c)) => {
                    let concept = ontology
                        .get(c)
                        .ok_or_else(|| problem(format!("unknown concept `{c}`")))?;
                    if concept.pool != Pool::Remote || concept.endpoint.is_none() {
                        return Err(problem(format!("`{c}`, which is not a remote agent with an endpoint")));
                    }
                    if node.triggers.is_empty() {
                        node.triggers = concept.domains.iter().cloned().map(Trigger::Domain).collect();
                    }
                }
                _ => {}
            }
            if let Some(c) = concepts.into_iter().find(|c| !ontology.contains(c)) {
                return Err(problem(format!("unknown concept `{c}`")));
            }
            if matches!(node.termination, Termination::RemoteEnded)
                && !matches!(node.action, Some(Action::CallRemote(_)))
            {
                return Err(problem("remote_ended outside a call_remote agent".into()));
            }
            if !node.triggers.is_empty() {
                registered.push(id);
            }
        }
        if registered.contains(&self.root) {
            return Err(InvalidTree::Shape(
                self.nodes[self.root].id.clone(),
                "the root cannot be a transformation candidate".into(),
            ));
        }
        self.registered = registered;
        Ok(())
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &TaskNode {
        &self.nodes[id]
    }

    pub fn find(&self, id: &str) -> Option<NodeId> {
        self.index.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &TaskNode)> {
        self.nodes.iter().enumerate()
    }

    /// Transformation candidates in registration order.
    pub fn registered(&self) -> &[NodeId] {
        &self.registered
    }
}
