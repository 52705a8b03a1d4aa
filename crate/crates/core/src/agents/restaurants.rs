//! File-backed restaurant listings.
//!
//! CSV columns: `name,location,food_type,price_range,rating`, with
//! `price_range` one of `cheap`, `moderate`, `expensive` and `rating` in
//! [0, 5]. Search results are ordered by rating (best first), then name.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::protocol::knowledge::{
    KnowledgeAgent, KnowledgeConstraint, KnowledgeEntity, KnowledgeError, SortKey, TableAgent,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceRange {
    Cheap,
    Moderate,
    Expensive,
}

impl PriceRange {
    pub const ALL: [PriceRange; 3] = [PriceRange::Cheap, PriceRange::Moderate, PriceRange::Expensive];

    pub fn as_str(self) -> &'static str {
        match self {
            PriceRange::Cheap => "cheap",
            PriceRange::Moderate => "moderate",
            PriceRange::Expensive => "expensive",
        }
    }
}

impl fmt::Display for PriceRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PriceRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PriceRange::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown price range `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestaurantRecord {
    pub name: String,
    pub location: String,
    pub food_type: String,
    pub price_range: PriceRange,
    pub rating: f64,
}

impl RestaurantRecord {
    fn entity(&self) -> KnowledgeEntity {
        KnowledgeEntity::from([
            ("name".to_string(), self.name.clone()),
            ("location".to_string(), self.location.clone()),
            ("food_type".to_string(), self.food_type.clone()),
            ("price_range".to_string(), self.price_range.to_string()),
            ("rating".to_string(), self.rating.to_string()),
        ])
    }
}

#[derive(Debug, Clone)]
pub struct RestaurantStore {
    records: Vec<RestaurantRecord>,
    table: TableAgent,
}

impl RestaurantStore {
    pub fn new(mut records: Vec<RestaurantRecord>) -> Result<Self, KnowledgeError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !(0.0..=5.0).contains(&r.rating) {
                return Err(KnowledgeError::Load(format!("{}: rating {} outside [0, 5]", r.name, r.rating)));
            }
            if !seen.insert((r.name.to_lowercase(), r.location.to_lowercase())) {
                return Err(KnowledgeError::Load(format!("duplicate restaurant {} in {}", r.name, r.location)));
            }
        }
        records.sort_by(|a, b| b.rating.total_cmp(&a.rating).then_with(|| a.name.cmp(&b.name)));
        let schema = ["name", "location", "food_type", "price_range", "rating"]
            .map(String::from)
            .to_vec();
        let table = TableAgent::new(
            schema,
            records.iter().map(RestaurantRecord::entity).collect(),
            &[SortKey::desc("rating"), SortKey::asc("name")],
        )?;
        Ok(RestaurantStore { records, table })
    }

    pub fn from_csv(source: &str) -> Result<Self, KnowledgeError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(source.as_bytes());
        let records = reader
            .deserialize()
            .collect::<Result<Vec<RestaurantRecord>, _>>()
            .map_err(|e| KnowledgeError::Load(e.to_string()))?;
        Self::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| KnowledgeError::Load(format!("cannot read {}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    /// All records, rating-descending then by name.
    pub fn records(&self) -> &[RestaurantRecord] {
        &self.records
    }

    pub fn restaurant_search(&self, constraints: &[KnowledgeConstraint]) -> Result<Vec<RestaurantRecord>, KnowledgeError> {
        let hits = self.table.query(constraints)?;
        Ok(hits
            .iter()
            .filter_map(|e| {
                self.records
                    .iter()
                    .find(|r| r.name == e["name"] && r.location == e["location"])
                    .cloned()
            })
            .collect())
    }

    /// Distinct values of a text column, lowercased and sorted.
    pub fn distinct(&self, field: &str) -> Vec<String> {
        let mut values: Vec<String> = self
            .records
            .iter()
            .filter_map(|r| match field {
                "location" => Some(r.location.to_lowercase()),
                "food_type" => Some(r.food_type.to_lowercase()),
                "price_range" => Some(r.price_range.to_string()),
                _ => None,
            })
            .collect();
        values.sort();
        values.dedup();
        values
    }
}

impl KnowledgeAgent for RestaurantStore {
    fn schema(&self) -> &[String] {
        self.table.schema()
    }

    fn query(&self, constraints: &[KnowledgeConstraint]) -> Result<Vec<KnowledgeEntity>, KnowledgeError> {
        self.table.query(constraints)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "name,location,food_type,price_range,rating\n\
                       Noodle Bar,Pittsburgh,thai,cheap,4.0\n\
                       Siam,Pittsburgh,thai,moderate,4.5\n\
                       Lupo,Boston,italian,expensive,4.5\n";

    #[test]
    fn ordered_by_rating_then_name() {
        let s = RestaurantStore::from_csv(CSV).unwrap();
        let names: Vec<_> = s.records().iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["Lupo", "Siam", "Noodle Bar"]);
    }

    #[test]
    fn search_is_conjunctive() {
        let s = RestaurantStore::from_csv(CSV).unwrap();
        let hits = s
            .restaurant_search(&[
                KnowledgeConstraint::eq("location", "pittsburgh"),
                KnowledgeConstraint::eq("price_range", "cheap"),
            ])
            .unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].name, "Noodle Bar");
        let none = s
            .restaurant_search(&[
                KnowledgeConstraint::eq("location", "Boston"),
                KnowledgeConstraint::eq("location", "Pittsburgh"),
            ])
            .unwrap();
        assert!(none.is_empty());
        assert!(s.restaurant_search(&[KnowledgeConstraint::eq("stars", "5")]).is_err());
    }

    #[test]
    fn validation() {
        let bad_price = "name,location,food_type,price_range,rating\nA,B,thai,free,4\n";
        assert!(RestaurantStore::from_csv(bad_price).is_err());
        let bad_rating = "name,location,food_type,price_range,rating\nA,B,thai,cheap,7\n";
        assert!(RestaurantStore::from_csv(bad_rating).is_err());
        let dup = "name,location,food_type,price_range,rating\nA,B,thai,cheap,4\nA,B,thai,cheap,3\n";
        assert!(RestaurantStore::from_csv(dup).is_err());
    }

    #[test]
    fn distinct_values() {
        let s = RestaurantStore::from_csv(CSV).unwrap();
        assert_eq!(s.distinct("location"), ["boston", "pittsburgh"]);
        assert_eq!(s.distinct("food_type"), ["italian", "thai"]);
    }
}
