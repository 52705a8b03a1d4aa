//! Lexicon-driven language understanding.
//!
//! Keyword rules contribute additive weight to domain and intent labels; the
//! totals are smoothed and normalized into probability maps. Entities come
//! from gazetteers (longest match first) plus a built-in ISO date pattern.
//!
//! Lexicon file format, one directive per line (`#` starts a comment):
//!
//! ```text
//! recommend -> intent:Request:17.95 | intent:Inform:1.8
//! restaurant -> domain:Restaurant:9.45 | domain:Hotel:0.4
//! entity Location: Pittsburgh, Boston, San Francisco
//! entity DateTime@0.7: today, tomorrow
//! ```
//!
//! A keyword may span several words. The optional `@conf` suffix on an entity
//! type sets the confidence of its matches (default 1.0).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{char_slice, tokenize, Token};

/// Floor weight given to every known label of a map that had at least one hit.
pub const SMOOTHING_FLOOR: f64 = 0.05;

/// Confidence assigned to gazetteer matches without an explicit `@conf`.
pub const DEFAULT_ENTITY_CONFIDENCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_type: String,
    pub value: String,
    pub confidence: f64,
    /// Character offsets into the utterance, end exclusive.
    pub span: (usize, usize),
}

/// NLU output for one utterance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SemanticFrame {
    pub utterance: String,
    pub domains: BTreeMap<String, f64>,
    pub intents: BTreeMap<String, f64>,
    pub entities: Vec<Entity>,
}

fn argmax(map: &BTreeMap<String, f64>) -> Option<(&str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for (label, &p) in map {
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((label.as_str(), p));
        }
    }
    best
}

impl SemanticFrame {
    /// An utterance with no interpretation at all.
    pub fn empty(utterance: impl Into<String>) -> Self {
        SemanticFrame {
            utterance: utterance.into(),
            ..Default::default()
        }
    }

    /// Highest-probability domain; ties go to the lexicographically first label.
    pub fn top_domain(&self) -> Option<(&str, f64)> {
        argmax(&self.domains)
    }

    pub fn top_intent(&self) -> Option<(&str, f64)> {
        argmax(&self.intents)
    }

    pub fn domain_prob(&self, label: &str) -> f64 {
        self.domains.get(label).copied().unwrap_or(0.0)
    }

    pub fn intent_prob(&self, label: &str) -> f64 {
        self.intents.get(label).copied().unwrap_or(0.0)
    }

    /// True when `label` is the argmax intent with probability at least `min`.
    pub fn has_intent(&self, label: &str, min: f64) -> bool {
        matches!(self.top_intent(), Some((l, p)) if l == label && p >= min)
    }

    pub fn first_entity(&self, entity_type: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.entity_type == entity_type)
    }

    /// True when the frame carries no domain, intent or entity.
    pub fn is_blank(&self) -> bool {
        self.domains.is_empty() && self.intents.is_empty() && self.entities.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LabelKind {
    Domain,
    Intent,
}

#[derive(Debug, Clone)]
struct Rule {
    phrase: Vec<String>,
    effects: Vec<(LabelKind, String, f64)>,
}

#[derive(Debug, Clone)]
struct GazetteerEntry {
    entity_type: String,
    confidence: f64,
    tokens: Vec<String>,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    /// Line 0 is used for whole-file failures such as a missing file.
    #[error("lexicon parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid weight {weight} at line {line}: weights must be positive")]
    InvalidWeight { line: usize, weight: f64 },
}

fn parse_err(line: usize, message: impl Into<String>) -> LexiconError {
    LexiconError::Parse {
        line,
        message: message.into(),
    }
}

/// Keyword rules and gazetteers. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    rules: Vec<Rule>,
    gazetteer: Vec<GazetteerEntry>,
    domain_labels: BTreeSet<String>,
    intent_labels: BTreeSet<String>,
}

impl Lexicon {
    pub fn parse(source: &str) -> Result<Self, LexiconError> {
        let mut lex = Lexicon::default();
        for (idx, raw) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("entity ") {
                lex.parse_gazetteer(line_no, rest)?;
            } else if let Some((lhs, rhs)) = line.split_once("->") {
                lex.parse_rule(line_no, lhs, rhs)?;
            } else {
                return Err(parse_err(line_no, format!("unrecognized line `{line}`")));
            }
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| parse_err(0, format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn parse_rule(&mut self, line: usize, lhs: &str, rhs: &str) -> Result<(), LexiconError> {
        let phrase: Vec<String> = tokenize(lhs).into_iter().map(|t| t.text).collect();
        if phrase.is_empty() {
            return Err(parse_err(line, "empty keyword"));
        }
        let mut effects = Vec::new();
        for part in rhs.split('|') {
            let fields: Vec<&str> = part.trim().split(':').map(str::trim).collect();
            let [kind, label, weight] = fields.as_slice() else {
                return Err(parse_err(line, format!("expected kind:LABEL:WEIGHT, got `{}`", part.trim())));
            };
            let kind = match *kind {
                "domain" => LabelKind::Domain,
                "intent" => LabelKind::Intent,
                other => return Err(parse_err(line, format!("unknown label kind `{other}`"))),
            };
            if label.is_empty() {
                return Err(parse_err(line, "empty label"));
            }
            let weight: f64 = weight
                .parse()
                .map_err(|_| parse_err(line, format!("bad weight `{weight}`")))?;
            if !weight.is_finite() || weight <= 0.0 {
                return Err(LexiconError::InvalidWeight { line, weight });
            }
            match kind {
                LabelKind::Domain => self.domain_labels.insert(label.to_string()),
                LabelKind::Intent => self.intent_labels.insert(label.to_string()),
            };
            effects.push((kind, label.to_string(), weight));
        }
        self.rules.push(Rule { phrase, effects });
        Ok(())
    }

    fn parse_gazetteer(&mut self, line: usize, rest: &str) -> Result<(), LexiconError> {
        let (head, values) = rest
            .split_once(':')
            .ok_or_else(|| parse_err(line, "expected `entity TYPE: v1, v2`"))?;
        let head = head.trim();
        let (entity_type, confidence) = match head.split_once('@') {
            Some((ty, conf)) => {
                let conf: f64 = conf
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad confidence `{conf}`")))?;
                if !(0.0..=1.0).contains(&conf) {
                    return Err(parse_err(line, format!("confidence {conf} outside [0, 1]")));
                }
                (ty.trim(), conf)
            }
            None => (head, DEFAULT_ENTITY_CONFIDENCE),
        };
        if entity_type.is_empty() || entity_type.contains(char::is_whitespace) {
            return Err(parse_err(line, format!("bad entity type `{entity_type}`")));
        }
        for value in values.split(',') {
            let tokens: Vec<String> = tokenize(value).into_iter().map(|t| t.text).collect();
            if tokens.is_empty() {
                continue;
            }
            self.gazetteer.push(GazetteerEntry {
                entity_type: entity_type.to_string(),
                confidence,
                tokens,
            });
        }
        Ok(())
    }

    pub fn domain_labels(&self) -> impl Iterator<Item = &str> {
        self.domain_labels.iter().map(String::as_str)
    }

    pub fn intent_labels(&self) -> impl Iterator<Item = &str> {
        self.intent_labels.iter().map(String::as_str)
    }

    /// Every entity type known to the gazetteer, plus the built-in `DateTime`.
    pub fn entity_types(&self) -> BTreeSet<&str> {
        let mut types: BTreeSet<&str> = self.gazetteer.iter().map(|g| g.entity_type.as_str()).collect();
        types.insert(DATE_ENTITY);
        types
    }
}

const DATE_ENTITY: &str = "DateTime";

fn iso_date_pattern() -> &'static Regex {
    static PATTERN: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"\b\d{4}-\d{2}-\d{2}\b").expect("static pattern"))
}

fn phrase_at(tokens: &[Token], at: usize, phrase: &[String]) -> bool {
    tokens.len() >= at + phrase.len()
        && tokens[at..at + phrase.len()]
            .iter()
            .zip(phrase)
            .all(|(t, p)| &t.text == p)
}

fn normalize(scores: BTreeMap<String, f64>, labels: &BTreeSet<String>) -> BTreeMap<String, f64> {
    if scores.is_empty() {
        return BTreeMap::new();
    }
    let mut smoothed: BTreeMap<String, f64> = labels
        .iter()
        .map(|l| (l.clone(), SMOOTHING_FLOOR))
        .collect();
    for (label, w) in scores {
        *smoothed.entry(label).or_insert(SMOOTHING_FLOOR) += w;
    }
    let total: f64 = smoothed.values().sum();
    smoothed.values_mut().for_each(|p| *p /= total);
    smoothed
}

/// Interprets one utterance. Pure in `(utterance, lexicon)`.
pub fn parse(utterance: &str, lexicon: &Lexicon) -> SemanticFrame {
    let tokens = tokenize(utterance);
    let mut domain_scores: BTreeMap<String, f64> = BTreeMap::new();
    let mut intent_scores: BTreeMap<String, f64> = BTreeMap::new();

    for rule in &lexicon.rules {
        let hits = (0..tokens.len())
            .filter(|&i| phrase_at(&tokens, i, &rule.phrase))
            .count();
        if hits == 0 {
            continue;
        }
        for (kind, label, weight) in &rule.effects {
            let target = match kind {
                LabelKind::Domain => &mut domain_scores,
                LabelKind::Intent => &mut intent_scores,
            };
            *target.entry(label.clone()).or_insert(0.0) += weight * hits as f64;
        }
    }

    SemanticFrame {
        utterance: utterance.to_string(),
        domains: normalize(domain_scores, &lexicon.domain_labels),
        intents: normalize(intent_scores, &lexicon.intent_labels),
        entities: extract_entities(utterance, &tokens, lexicon),
    }
}

fn extract_entities(utterance: &str, tokens: &[Token], lexicon: &Lexicon) -> Vec<Entity> {
    // (start token, token length, gazetteer index)
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
    for (gi, entry) in lexicon.gazetteer.iter().enumerate() {
        for start in 0..tokens.len() {
            if phrase_at(tokens, start, &entry.tokens) {
                candidates.push((start, entry.tokens.len(), gi));
            }
        }
    }
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)).then(a.2.cmp(&b.2)));

    let mut taken = vec![false; tokens.len()];
    let mut entities = Vec::new();
    for (start, len, gi) in candidates {
        if taken[start..start + len].iter().any(|&t| t) {
            continue;
        }
        taken[start..start + len].iter_mut().for_each(|t| *t = true);
        let entry = &lexicon.gazetteer[gi];
        let span = (tokens[start].start, tokens[start + len - 1].end);
        entities.push(Entity {
            entity_type: entry.entity_type.clone(),
            value: char_slice(utterance, span.0, span.1),
            confidence: entry.confidence,
            span,
        });
    }

    for m in iso_date_pattern().find_iter(utterance) {
        let start = utterance[..m.start()].chars().count();
        let end = start + m.as_str().chars().count();
        let overlaps = entities.iter().any(|e| e.span.0 < end && start < e.span.1);
        if !overlaps {
            entities.push(Entity {
                entity_type: DATE_ENTITY.to_string(),
                value: m.as_str().to_string(),
                confidence: DEFAULT_ENTITY_CONFIDENCE,
                span: (start, end),
            });
        }
    }

    entities.sort_by_key(|e| e.span);
    entities
}
