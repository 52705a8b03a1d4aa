//! Knowledge remote agents: a list of constraints in, the matching entities out.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintOp {
    Eq,
    Contains,
    Le,
    Ge,
}

impl FromStr for ConstraintOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eq" => Ok(ConstraintOp::Eq),
            "contains" => Ok(ConstraintOp::Contains),
            "le" => Ok(ConstraintOp::Le),
            "ge" => Ok(ConstraintOp::Ge),
            other => Err(format!("unknown constraint operator `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeConstraint {
    pub field: String,
    pub op: ConstraintOp,
    pub value: String,
}

impl KnowledgeConstraint {
    pub fn new(field: &str, op: ConstraintOp, value: &str) -> Self {
        KnowledgeConstraint {
            field: field.to_string(),
            op,
            value: value.to_string(),
        }
    }

    pub fn eq(field: &str, value: &str) -> Self {
        Self::new(field, ConstraintOp::Eq, value)
    }

    /// Text comparisons are case-insensitive; two numeric operands compare as
    /// numbers.
    pub fn matches(&self, entity: &KnowledgeEntity) -> bool {
        let Some(actual) = entity.get(&self.field) else {
            return false;
        };
        let order = compare(actual, &self.value);
        match self.op {
            ConstraintOp::Eq => order == Ordering::Equal,
            ConstraintOp::Contains => actual
                .to_lowercase()
                .contains(&self.value.trim().to_lowercase()),
            ConstraintOp::Le => order != Ordering::Greater,
            ConstraintOp::Ge => order != Ordering::Less,
        }
    }
}

impl fmt::Display for KnowledgeConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?} {}", self.field, self.op, self.value)
    }
}

pub fn compare(a: &str, b: &str) -> Ordering {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
        _ => a.trim().to_lowercase().cmp(&b.trim().to_lowercase()),
    }
}

pub type KnowledgeEntity = BTreeMap<String, String>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum KnowledgeError {
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("knowledge agent unreachable: {0}")]
    Unreachable(String),
    #[error("bad knowledge table: {0}")]
    Load(String),
}

pub trait KnowledgeAgent: Send + Sync {
    fn schema(&self) -> &[String];
    /// Entities satisfying every constraint, in the agent's declared order.
    fn query(&self, constraints: &[KnowledgeConstraint]) -> Result<Vec<KnowledgeEntity>, KnowledgeError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortKey {
    pub field: String,
    pub descending: bool,
}

impl SortKey {
    pub fn asc(field: &str) -> Self {
        SortKey {
            field: field.to_string(),
            descending: false,
        }
    }

    pub fn desc(field: &str) -> Self {
        SortKey {
            field: field.to_string(),
            descending: true,
        }
    }
}

/// An in-memory table: the shape every file-backed knowledge agent takes.
#[derive(Debug, Clone)]
pub struct TableAgent {
    schema: Vec<String>,
    rows: Vec<KnowledgeEntity>,
}

impl TableAgent {
    /// Rows are validated against the schema and stored in `order`.
    pub fn new(
        schema: Vec<String>,
        mut rows: Vec<KnowledgeEntity>,
        order: &[SortKey],
    ) -> Result<Self, KnowledgeError> {
        for key in order {
            if !schema.contains(&key.field) {
                return Err(KnowledgeError::UnknownField(key.field.clone()));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if let Some(f) = schema.iter().find(|f| !row.contains_key(*f)) {
                return Err(KnowledgeError::Load(format!("row {i} lacks field `{f}`")));
            }
        }
        rows.sort_by(|a, b| {
            order
                .iter()
                .map(|k| {
                    let o = compare(&a[&k.field], &b[&k.field]);
                    if k.descending {
                        o.reverse()
                    } else {
                        o
                    }
                })
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        });
        Ok(TableAgent { schema, rows })
    }

    /// Reads a CSV document whose header row is the schema.
    pub fn from_csv(source: &str, order: &[SortKey]) -> Result<Self, KnowledgeError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(source.as_bytes());
        let schema: Vec<String> = reader
            .headers()
            .map_err(|e| KnowledgeError::Load(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| KnowledgeError::Load(e.to_string()))?;
            rows.push(
                schema
                    .iter()
                    .cloned()
                    .zip(rec.iter().map(str::to_string))
                    .collect(),
            );
        }
        Self::new(schema, rows, order)
    }

    pub fn rows(&self) -> &[KnowledgeEntity] {
        &self.rows
    }
}

impl KnowledgeAgent for TableAgent {
    fn schema(&self) -> &[String] {
        &self.schema
    }

    fn query(&self, constraints: &[KnowledgeConstraint]) -> Result<Vec<KnowledgeEntity>, KnowledgeError> {
        if let Some(c) = constraints.iter().find(|c| !self.schema.contains(&c.field)) {
            return Err(KnowledgeError::UnknownField(c.field.clone()));
        }
        Ok(self
            .rows
            .iter()
            .filter(|row| constraints.iter().all(|c| c.matches(row)))
            .cloned()
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "name,city,stars\nB,Boston,4\nA,Pittsburgh,5\nC,pittsburgh,3.5\n";

    fn table() -> TableAgent {
        TableAgent::from_csv(CSV, &[SortKey::desc("stars"), SortKey::asc("name")]).unwrap()
    }

    #[test]
    fn ordered_by_declared_key() {
        let names: Vec<_> = table().rows().iter().map(|r| r["name"].clone()).collect();
        assert_eq!(names, ["A", "B", "C"]);
    }

    #[test]
    fn conjunctive_and_case_insensitive() {
        let t = table();
        let hits = t.query(&[KnowledgeConstraint::eq("city", "PITTSBURGH")]).unwrap();
        assert_eq!(hits.len(), 2);
        let hits = t
            .query(&[
                KnowledgeConstraint::eq("city", "pittsburgh"),
                KnowledgeConstraint::new("stars", ConstraintOp::Ge, "4"),
            ])
            .unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0]["name"], "A");
    }

    #[test]
    fn numeric_compare_and_contains() {
        let t = table();
        assert_eq!(t.query(&[KnowledgeConstraint::new("stars", ConstraintOp::Le, "4")]).unwrap().len(), 2);
        assert_eq!(
            t.query(&[KnowledgeConstraint::new("city", ConstraintOp::Contains, "burgh")]).unwrap().len(),
            2
        );
    }

    #[test]
    fn empty_constraints_and_no_match() {
        let t = table();
        assert_eq!(t.query(&[]).unwrap().len(), 3);
        assert!(t.query(&[KnowledgeConstraint::eq("city", "Atlantis")]).unwrap().is_empty());
    }

    #[test]
    fn unknown_field() {
        assert_eq!(
            table().query(&[KnowledgeConstraint::eq("color", "red")]),
            Err(KnowledgeError::UnknownField("color".into()))
        );
        assert!(TableAgent::from_csv(CSV, &[SortKey::asc("nope")]).is_err());
    }
}
