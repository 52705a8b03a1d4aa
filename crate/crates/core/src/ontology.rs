//! Domain knowledge: concepts grouped into pools, linked by a dependency DAG.
//!
//! [`Ontology`] is the immutable schema shared by every session. The mutable,
//! per-session attribute maps live in [`Beliefs`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlu::SemanticFrame;

/// Attribute key written by subscriptions that don't name one.
pub const DEFAULT_KEY: &str = "value";

/// Minimum argmax probability for a domain or intent subscription to fire.
pub const LABEL_MATCH_MIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    /// Concepts backed by knowledge agents (weather reports, the agent's name).
    Agent,
    /// Concepts only the user knows (dates, locations).
    User,
    /// Text remote agents, one concept per agent.
    Remote,
}

/// One thing a concept listens for in a semantic frame. Every component that
/// is set must match.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subscription {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    #[serde(default = "default_key")]
    pub key: String,
}

fn default_key() -> String {
    DEFAULT_KEY.to_string()
}

impl Subscription {
    pub fn entity(entity_type: &str) -> Self {
        Subscription {
            domain: None,
            intent: None,
            entity: Some(entity_type.to_string()),
            key: default_key(),
        }
    }

    pub fn domain(label: &str) -> Self {
        Subscription {
            domain: Some(label.to_string()),
            intent: None,
            entity: None,
            key: default_key(),
        }
    }

    pub fn with_key(mut self, key: &str) -> Self {
        self.key = key.to_string();
        self
    }

    /// Value and confidence this subscription extracts from `frame`, if it matches.
    fn extract(&self, frame: &SemanticFrame) -> Option<(AttrValue, f64)> {
        if self.domain.is_none() && self.intent.is_none() && self.entity.is_none() {
            return None;
        }
        let mut extracted: Option<(AttrValue, f64)> = None;
        if let Some(label) = &self.intent {
            match frame.top_intent() {
                Some((top, p)) if top == label && p >= LABEL_MATCH_MIN => {
                    extracted = Some((AttrValue::Text(label.clone()), p))
                }
                _ => return None,
            }
        }
        if let Some(label) = &self.domain {
            match frame.top_domain() {
                Some((top, p)) if top == label && p >= LABEL_MATCH_MIN => {
                    extracted = Some((AttrValue::Text(label.clone()), p))
                }
                _ => return None,
            }
        }
        if let Some(ty) = &self.entity {
            let ent = frame.first_entity(ty)?;
            extracted = Some((AttrValue::Text(ent.value.clone()), ent.confidence));
        }
        extracted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub name: String,
    pub pool: Pool,
    #[serde(default, rename = "deps")]
    pub dependencies: Vec<String>,
    #[serde(default, rename = "subs")]
    pub subscriptions: Vec<Subscription>,
    /// Remote pool only: where the text remote agent lives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Remote pool only: domains the agent covers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domains: Vec<String>,
}

impl Concept {
    pub fn new(name: &str, pool: Pool) -> Self {
        Concept {
            name: name.to_string(),
            pool,
            dependencies: Vec::new(),
            subscriptions: Vec::new(),
            endpoint: None,
            domains: Vec::new(),
        }
    }

    pub fn remote(name: &str, endpoint: &str, domains: &[&str]) -> Self {
        Concept {
            endpoint: Some(endpoint.to_string()),
            domains: domains.iter().map(|d| d.to_string()).collect(),
            ..Concept::new(name, Pool::Remote)
        }
    }

    pub fn depends_on(mut self, deps: &[&str]) -> Self {
        self.dependencies = deps.iter().map(|d| d.to_string()).collect();
        self
    }

    pub fn subscribe(mut self, sub: Subscription) -> Self {
        self.subscriptions.push(sub);
        self
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("concept `{0}` already exists")]
    DuplicateName(String),
    #[error("concept `{concept}` depends on unknown concept `{dependency}`")]
    UnknownDependency { concept: String, dependency: String },
    #[error("dependencies of `{0}` would introduce a cycle")]
    CycleIntroduced(String),
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("concept `{concept}`: {message}")]
    Invalid { concept: String, message: String },
    #[error("ontology file: {0}")]
    Parse(String),
}

/// The concept schema. Pools partition the concept names and the dependency
/// relation is kept acyclic by every mutation.
#[derive(Debug, Clone, Default)]
pub struct Ontology {
    concepts: BTreeMap<String, Concept>,
    pools: BTreeMap<Pool, BTreeSet<String>>,
}

#[derive(Deserialize)]
struct OntologyFile {
    #[serde(default)]
    concepts: Vec<Concept>,
}

impl Ontology {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses a TOML document of `[[concepts]]` tables. Concepts may appear in
    /// any order; dependencies are resolved after all names are known.
    pub fn from_toml(source: &str) -> Result<Self, OntologyError> {
        let file: OntologyFile =
            toml::from_str(source).map_err(|e| OntologyError::Parse(e.to_string()))?;
        let mut pending = file.concepts;
        let names: BTreeSet<&str> = pending.iter().map(|c| c.name.as_str()).collect();
        for c in &pending {
            if let Some(dep) = c.dependencies.iter().find(|d| !names.contains(d.as_str())) {
                return Err(OntologyError::UnknownDependency {
                    concept: c.name.clone(),
                    dependency: dep.clone(),
                });
            }
        }
        let mut onto = Ontology::new();
        // Insert in dependency order; anything left over sits on a cycle.
        while !pending.is_empty() {
            let ready = pending
                .iter()
                .position(|c| c.dependencies.iter().all(|d| onto.contains(d)));
            match ready {
                Some(i) => {
                    let concept = pending.remove(i);
                    onto.add_concept(concept)?;
                }
                None => return Err(OntologyError::CycleIntroduced(pending[0].name.clone())),
            }
        }
        Ok(onto)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OntologyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| OntologyError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.concepts.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Concept> {
        self.concepts.get(name)
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn pool(&self, pool: Pool) -> impl Iterator<Item = &str> {
        self.pools.get(&pool).into_iter().flatten().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    fn validate_shape(concept: &Concept) -> Result<(), OntologyError> {
        let invalid = |message: &str| OntologyError::Invalid {
            concept: concept.name.clone(),
            message: message.to_string(),
        };
        if concept.name.trim().is_empty() {
            return Err(invalid("empty name"));
        }
        match concept.pool {
            Pool::Remote => {
                if concept.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(invalid("remote concepts need an endpoint"));
                }
                if concept.domains.is_empty() {
                    return Err(invalid("remote concepts need at least one covered domain"));
                }
            }
            _ => {
                if concept.endpoint.is_some() {
                    return Err(invalid("only remote concepts may carry an endpoint"));
                }
            }
        }
        Ok(())
    }

    pub fn add_concept(&mut self, concept: Concept) -> Result<(), OntologyError> {
        if self.concepts.contains_key(&concept.name) {
            return Err(OntologyError::DuplicateName(concept.name));
        }
        if concept.dependencies.iter().any(|d| d == &concept.name) {
            return Err(OntologyError::CycleIntroduced(concept.name));
        }
        if let Some(dep) = concept.dependencies.iter().find(|d| !self.contains(d)) {
            return Err(OntologyError::UnknownDependency {
                concept: concept.name.clone(),
                dependency: dep.clone(),
            });
        }
        Self::validate_shape(&concept)?;
        self.pools
            .entry(concept.pool)
            .or_default()
            .insert(concept.name.clone());
        self.concepts.insert(concept.name.clone(), concept);
        Ok(())
    }

    /// Points a remote concept at a different endpoint.
    pub fn set_endpoint(&mut self, name: &str, endpoint: &str) -> Result<(), OntologyError> {
        let concept = self
            .concepts
            .get_mut(name)
            .ok_or_else(|| OntologyError::UnknownConcept(name.to_string()))?;
        if concept.pool != Pool::Remote || endpoint.trim().is_empty() {
            return Err(OntologyError::Invalid {
                concept: name.to_string(),
                message: "only remote concepts take a (non-empty) endpoint".into(),
            });
        }
        concept.endpoint = Some(endpoint.to_string());
        Ok(())
    }

    /// Replaces the dependency list of an existing concept, rejecting any
    /// change that would close a cycle.
    pub fn set_dependencies(&mut self, name: &str, deps: Vec<String>) -> Result<(), OntologyError> {
        if !self.contains(name) {
            return Err(OntologyError::UnknownConcept(name.to_string()));
        }
        if let Some(dep) = deps.iter().find(|d| !self.contains(d)) {
            return Err(OntologyError::UnknownDependency {
                concept: name.to_string(),
                dependency: dep.clone(),
            });
        }
        // A cycle appears iff `name` is reachable from one of the new deps.
        for dep in &deps {
            if dep == name || self.transitive_deps(dep).contains(name) {
                return Err(OntologyError::CycleIntroduced(name.to_string()));
            }
        }
        self.concepts.get_mut(name).expect("checked above").dependencies = deps;
        Ok(())
    }

    /// All concepts reachable through dependency edges (excluding `name`).
    pub fn transitive_deps(&self, name: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = vec![name];
        while let Some(cur) = stack.pop() {
            if let Some(c) = self.concepts.get(cur) {
                for d in &c.dependencies {
                    if seen.insert(d.clone()) {
                        stack.push(d);
                    }
                }
            }
        }
        seen
    }

    /// Longest dependency chain below `name`; concepts without deps are level 0.
    fn level(&self, name: &str, memo: &mut HashMap<String, usize>) -> usize {
        if let Some(&l) = memo.get(name) {
            return l;
        }
        let l = self
            .concepts
            .get(name)
            .map(|c| {
                c.dependencies
                    .iter()
                    .map(|d| self.level(d, memo) + 1)
                    .max()
                    .unwrap_or(0)
            })
            .unwrap_or(0);
        memo.insert(name.to_string(), l);
        l
    }

    /// A topological order of every concept (dependencies first, then by name).
    pub fn topological_order(&self) -> Vec<String> {
        let mut memo = HashMap::new();
        let mut names: Vec<(usize, String)> = self
            .concepts
            .keys()
            .map(|n| (self.level(n, &mut memo), n.clone()))
            .collect();
        names.sort();
        names.into_iter().map(|(_, n)| n).collect()
    }

    /// Remote concepts covering `domain`, in name order.
    pub fn remotes_for_domain<'a>(&'a self, domain: &'a str) -> impl Iterator<Item = &'a Concept> {
        self.pool(Pool::Remote)
            .filter_map(|n| self.concepts.get(n))
            .filter(move |c| c.domains.iter().any(|d| d == domain))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Number(n) => write!(f, "{n}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grounding {
    Empty,
    Updated,
    Grounded,
    Disconfirmed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub value: Option<AttrValue>,
    pub confidence: f64,
    pub grounding: Grounding,
    pub turn_updated: u32,
}

impl Default for AttributeEntry {
    fn default() -> Self {
        AttributeEntry {
            value: None,
            confidence: 0.0,
            grounding: Grounding::Empty,
            turn_updated: 0,
        }
    }
}

/// A (concept, attribute-key) pair.
pub type Slot = (String, String);

/// Per-session attribute maps for the concepts of one [`Ontology`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Beliefs {
    entries: BTreeMap<String, BTreeMap<String, AttributeEntry>>,
}

impl Beliefs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&self, concept: &str, key: &str) -> Option<&AttributeEntry> {
        self.entries.get(concept).and_then(|m| m.get(key))
    }

    pub fn value(&self, concept: &str) -> Option<&AttrValue> {
        self.entry(concept, DEFAULT_KEY).and_then(|e| e.value.as_ref())
    }

    pub fn attributes(&self, concept: &str) -> impl Iterator<Item = (&str, &AttributeEntry)> {
        self.entries
            .get(concept)
            .into_iter()
            .flatten()
            .map(|(k, e)| (k.as_str(), e))
    }

    /// True when the concept has at least one attribute and all are grounded.
    pub fn is_grounded(&self, concept: &str) -> bool {
        match self.entries.get(concept) {
            Some(m) if !m.is_empty() => m.values().all(|e| e.grounding == Grounding::Grounded),
            _ => false,
        }
    }

    /// Writes every value the frame carries for a subscribed concept.
    ///
    /// A grounded entry restated with the same value stays grounded; only a
    /// changed value sends it back to `Updated`.
    pub fn apply_frame(&mut self, ontology: &Ontology, frame: &SemanticFrame, turn: u32) -> Vec<Slot> {
        let mut touched = Vec::new();
        for concept in ontology.concepts() {
            for sub in &concept.subscriptions {
                let Some((value, confidence)) = sub.extract(frame) else {
                    continue;
                };
                let entry = self
                    .entries
                    .entry(concept.name.clone())
                    .or_default()
                    .entry(sub.key.clone())
                    .or_default();
                let restated = entry.grounding == Grounding::Grounded
                    && entry.value.as_ref() == Some(&value);
                if !restated {
                    entry.value = Some(value);
                    entry.confidence = confidence;
                    entry.grounding = Grounding::Updated;
                    entry.turn_updated = turn;
                }
                let slot = (concept.name.clone(), sub.key.clone());
                if !touched.contains(&slot) {
                    touched.push(slot);
                }
            }
        }
        touched
    }

    /// User-pool entries that were updated but not yet grounded, oldest turn
    /// first, then by name.
    pub fn ungrounded_updated(&self, ontology: &Ontology) -> Vec<Slot> {
        let mut found: Vec<(u32, String, String)> = Vec::new();
        for name in ontology.pool(Pool::User) {
            for (key, e) in self.attributes(name) {
                if e.grounding == Grounding::Updated {
                    found.push((e.turn_updated, name.to_string(), key.to_string()));
                }
            }
        }
        found.sort();
        found.into_iter().map(|(_, c, k)| (c, k)).collect()
    }

    /// Transitive dependencies of `name` that are not grounded, dependencies
    /// before dependents and by name within a level.
    pub fn unmet_dependencies(&self, ontology: &Ontology, name: &str) -> Result<Vec<String>, OntologyError> {
        if !ontology.contains(name) {
            return Err(OntologyError::UnknownConcept(name.to_string()));
        }
        let deps = ontology.transitive_deps(name);
        let mut memo = HashMap::new();
        let mut unmet: Vec<(usize, String)> = deps
            .into_iter()
            .filter(|d| !self.is_grounded(d))
            .map(|d| (ontology.level(&d, &mut memo), d))
            .collect();
        unmet.sort();
        Ok(unmet.into_iter().map(|(_, d)| d).collect())
    }

    pub fn set_grounding(&mut self, concept: &str, key: &str, grounding: Grounding) {
        if let Some(e) = self.entries.get_mut(concept).and_then(|m| m.get_mut(key)) {
            if e.value.is_some() {
                e.grounding = grounding;
            }
        }
    }

    /// Stores a system-known value (e.g. a knowledge lookup result) as grounded.
    pub fn set_known(&mut self, concept: &str, key: &str, value: AttrValue, turn: u32) {
        self.entries.entry(concept.to_string()).or_default().insert(
            key.to_string(),
            AttributeEntry {
                value: Some(value),
                confidence: 1.0,
                grounding: Grounding::Grounded,
                turn_updated: turn,
            },
        );
    }
}
