//! Example-based chatbot: nearest prompt by cosine similarity over
//! idf-weighted bags of words, gated by a similarity threshold.
//!
//! Token weights are `tf * (1 + ln(N / df))`. A query token that never occurs
//! in the index weighs as much as the rarest indexed token, so unknown words
//! pull the score down instead of being ignored.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::text::words;

/// Score a match must strictly exceed.
pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamplePair {
    pub prompt: String,
    pub response: String,
    pub tags: Vec<String>,
}

impl ExamplePair {
    pub fn new(prompt: impl Into<String>, response: impl Into<String>) -> Self {
        ExamplePair {
            prompt: prompt.into(),
            response: response.into(),
            tags: Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ChatbotError {
    #[error("example database is empty")]
    EmptyDatabase,
    #[error("pair database line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Reads `prompt<TAB>response[<TAB>tag,tag]` lines. `#` lines are comments.
pub fn parse_pairs(source: &str) -> Result<Vec<ExamplePair>, ChatbotError> {
    let mut pairs = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let err = |message: &str| ChatbotError::Parse {
            line: idx + 1,
            message: message.to_string(),
        };
        let mut fields = line.split('\t');
        let prompt = fields.next().unwrap_or("").trim();
        let response = fields.next().ok_or_else(|| err("missing tab separator"))?.trim();
        if prompt.is_empty() || response.is_empty() {
            return Err(err("prompt and response must be non-empty"));
        }
        let tags = fields
            .next()
            .map(|t| t.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default();
        pairs.push(ExamplePair {
            prompt: prompt.to_string(),
            response: response.to_string(),
            tags,
        });
    }
    Ok(pairs)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<ExamplePair>, ChatbotError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ChatbotError::Parse {
        line: 0,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_pairs(&text)
}

/// Sparse vector keyed by token.
pub type SparseVec = BTreeMap<String, f64>;

pub fn cosine(a: &SparseVec, b: &SparseVec) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(k, x)| large.get(k).map(|y| x * y))
        .sum();
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMatch {
    pub response: String,
    pub score: f64,
    pub row: usize,
}

/// Something that can answer out-of-domain utterances.
pub trait ChatResponder: Send + Sync {
    /// Best answer whose score strictly exceeds `threshold`.
    fn respond(&self, utterance: &str, threshold: f64) -> Option<ChatMatch>;
}

#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    oov_idf: f64,
    rows: Vec<SparseVec>,
    pairs: Vec<ExamplePair>,
}

impl EmbeddingIndex {
    pub fn build(pairs: Vec<ExamplePair>) -> Result<Self, ChatbotError> {
        if pairs.is_empty() {
            return Err(ChatbotError::EmptyDatabase);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let docs: Vec<Vec<String>> = pairs.iter().map(|p| words(&p.prompt)).collect();
        for doc in &docs {
            let mut uniq = doc.clone();
            uniq.sort();
            uniq.dedup();
            for t in uniq {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let n = pairs.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (dim, (tok, count)) in df.into_iter().enumerate() {
            idf.push(1.0 + (n / count as f64).ln());
            vocabulary.insert(tok, dim);
        }
        let oov_idf = idf.iter().copied().fold(1.0, f64::max);
        let mut index = EmbeddingIndex {
            vocabulary,
            idf,
            oov_idf,
            rows: Vec::new(),
            pairs,
        };
        index.rows = docs.iter().map(|d| index.weigh(d)).collect();
        Ok(index)
    }

    fn token_idf(&self, token: &str) -> f64 {
        self.vocabulary
            .get(token)
            .map(|&d| self.idf[d])
            .unwrap_or(self.oov_idf)
    }

    fn weigh(&self, tokens: &[String]) -> SparseVec {
        let mut v = SparseVec::new();
        for t in tokens {
            *v.entry(t.clone()).or_insert(0.0) += 1.0;
        }
        for (t, w) in v.iter_mut() {
            *w *= self.token_idf(t);
        }
        let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.values_mut().for_each(|x| *x /= norm);
        }
        v
    }

    /// Unit-norm embedding of `text` (empty map for text without tokens).
    pub fn embed(&self, text: &str) -> SparseVec {
        self.weigh(&words(text))
    }

    pub fn rows(&self) -> &[SparseVec] {
        &self.rows
    }

    pub fn pairs(&self) -> &[ExamplePair] {
        &self.pairs
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    /// Highest-scoring row and its score; ties go to the lowest row index.
    pub fn best(&self, utterance: &str) -> (usize, f64) {
        let q = self.embed(utterance);
        let mut best = (0, 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let s = cosine(&q, row);
            if s > best.1 {
                best = (i, s);
            }
        }
        best
    }
}

impl ChatResponder for EmbeddingIndex {
    fn respond(&self, utterance: &str, threshold: f64) -> Option<ChatMatch> {
        let (row, score) = self.best(utterance);
        (score > threshold).then(|| ChatMatch {
            response: self.pairs[row].response.clone(),
            score,
            row,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> EmbeddingIndex {
        EmbeddingIndex::build(vec![
            ExamplePair::new("who founded microsoft", "Bill Gates and Paul Allen."),
            ExamplePair::new("how are you", "I'm fine, thanks."),
        ])
        .unwrap()
    }

    #[test]
    fn single_pair_has_unit_row() {
        let idx = EmbeddingIndex::build(vec![ExamplePair::new("hello there", "hi")]).unwrap();
        let norm: f64 = idx.rows()[0].values().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_database() {
        assert_eq!(EmbeddingIndex::build(vec![]).unwrap_err(), ChatbotError::EmptyDatabase);
    }

    #[test]
    fn duplicate_prompts_tie_to_first_row() {
        let idx = EmbeddingIndex::build(vec![
            ExamplePair::new("tell me a joke", "first"),
            ExamplePair::new("tell me a joke", "second"),
        ])
        .unwrap();
        let m = idx.respond("tell me a joke", 0.8).unwrap();
        assert_eq!((m.row, m.response.as_str()), (0, "first"));
    }

    #[test]
    fn identical_prompt_scores_one() {
        let m = toy().respond("How are you?", 0.8).unwrap();
        assert!((m.score - 1.0).abs() < 1e-6);
        assert_eq!(m.response, "I'm fine, thanks.");
    }

    #[test]
    fn disjoint_vocabulary_scores_zero() {
        let idx = toy();
        assert_eq!(idx.best("purple elephants").1, 0.0);
        assert!(idx.respond("purple elephants", 0.8).is_none());
    }

    #[test]
    fn hand_computed_partial_overlap() {
        // N = 2 and every prompt token has df = 1, so all idf = 1 + ln 2 and
        // the weights cancel: cos("who founded", row0) = 2 / (sqrt 2 * sqrt 3).
        let idx = toy();
        let expected = 2.0 / (2.0f64.sqrt() * 3.0f64.sqrt());
        let (row, score) = idx.best("who founded");
        assert_eq!(row, 0);
        assert!((score - expected).abs() < 1e-12);
        assert!(expected > 0.8);
        assert!(idx.respond("who founded", 0.8).is_some());

        // An unknown third token weighs like the rarest known one: 2/3.
        let (_, score) = idx.best("who founded apple");
        assert!((score - 2.0 / 3.0).abs() < 1e-12);
        assert!(idx.respond("who founded apple", 0.8).is_none());
    }

    #[test]
    fn threshold_is_strict() {
        let idx = toy();
        let (_, s) = idx.best("who founded");
        assert!(idx.respond("who founded", s).is_none());
        assert!(idx.respond("who founded", s - 1e-9).is_some());
    }

    #[test]
    fn parses_tsv() {
        let pairs = parse_pairs("# c\nhi\thello\nbye\tsee you\tsmalltalk,exit\n").unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].tags, ["smalltalk", "exit"]);
        assert!(matches!(parse_pairs("no tab here"), Err(ChatbotError::Parse { line: 1, .. })));
        assert!(matches!(parse_pairs(" \tx"), Err(ChatbotError::Parse { line: 1, .. })));
    }

    fn bag() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "zz"]), 0..6)
            .prop_map(|v| v.into_iter().map(str::to_string).collect())
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(a in bag(), b in bag()) {
            let idx = EmbeddingIndex::build(vec![
                ExamplePair::new("a b c", "1"),
                ExamplePair::new("c d", "2"),
                ExamplePair::new("e", "3"),
            ]).unwrap();
            let va = idx.embed(&a.join(" "));
            let vb = idx.embed(&b.join(" "));
            prop_assert!((cosine(&va, &vb) - cosine(&vb, &va)).abs() < 1e-12);
        }

        #[test]
        fn gate_is_sound(q in bag(), threshold in 0.0f64..1.0) {
            let idx = toy();
            if let Some(m) = idx.respond(&q.join(" "), threshold) {
                prop_assert!(m.score > threshold);
            }
        }

        #[test]
        fn duplicating_pairs_keeps_scores(q in bag()) {
            let base = vec![
                ExamplePair::new("a b c", "1"),
                ExamplePair::new("c d", "2"),
                ExamplePair::new("e a", "3"),
            ];
            let mut doubled = base.clone();
            doubled.extend(base.clone());
            let one = EmbeddingIndex::build(base).unwrap();
            let two = EmbeddingIndex::build(doubled).unwrap();
            let text = q.join(" ");
            prop_assert!((one.best(&text).1 - two.best(&text).1).abs() < 1e-12);
        }
    }
}
