//! File-backed weather reports.
//!
//! CSV columns: `location,date,condition,high_c,low_c`, dates in ISO-8601.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::engine::KnowledgeSource;
use crate::ontology::Beliefs;
use crate::protocol::knowledge::{
    KnowledgeAgent, KnowledgeConstraint, KnowledgeEntity, KnowledgeError, SortKey, TableAgent,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub location: String,
    pub date: NaiveDate,
    pub condition: String,
    pub high_c: f64,
    pub low_c: f64,
}

impl WeatherRecord {
    fn entity(&self) -> KnowledgeEntity {
        KnowledgeEntity::from([
            ("location".to_string(), self.location.clone()),
            ("date".to_string(), self.date.to_string()),
            ("condition".to_string(), self.condition.clone()),
            ("high_c".to_string(), fmt_num(self.high_c)),
            ("low_c".to_string(), fmt_num(self.low_c)),
        ])
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.0}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct WeatherStore {
    records: Vec<WeatherRecord>,
    table: TableAgent,
}

impl WeatherStore {
    pub fn new(mut records: Vec<WeatherRecord>) -> Result<Self, KnowledgeError> {
        let mut seen = HashSet::new();
        for r in &records {
            if r.low_c > r.high_c {
                return Err(KnowledgeError::Load(format!(
                    "{} {}: low {} above high {}",
                    r.location, r.date, r.low_c, r.high_c
                )));
            }
            if !seen.insert((r.location.to_lowercase(), r.date)) {
                return Err(KnowledgeError::Load(format!("duplicate report for {} {}", r.location, r.date)));
            }
        }
        records.sort_by_key(|r| (r.location.to_lowercase(), r.date));
        let schema = ["location", "date", "condition", "high_c", "low_c"].map(String::from).to_vec();
        let table = TableAgent::new(
            schema,
            records.iter().map(WeatherRecord::entity).collect(),
            &[SortKey::asc("location"), SortKey::asc("date")],
        )?;
        Ok(WeatherStore { records, table })
    }

    pub fn from_csv(source: &str) -> Result<Self, KnowledgeError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(source.as_bytes());
        let records = reader
            .deserialize()
            .collect::<Result<Vec<WeatherRecord>, _>>()
            .map_err(|e| KnowledgeError::Load(e.to_string()))?;
        Self::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| KnowledgeError::Load(format!("cannot read {}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    pub fn records(&self) -> &[WeatherRecord] {
        &self.records
    }

    /// Exact match on location (case-insensitive) and date.
    pub fn weather_lookup(&self, location: &str, date: NaiveDate) -> Option<&WeatherRecord> {
        let location = location.trim().to_lowercase();
        self.records
            .iter()
            .find(|r| r.date == date && r.location.to_lowercase() == location)
    }
}

impl KnowledgeAgent for WeatherStore {
    fn schema(&self) -> &[String] {
        self.table.schema()
    }

    fn query(&self, constraints: &[KnowledgeConstraint]) -> Result<Vec<KnowledgeEntity>, KnowledgeError> {
        self.table.query(constraints)
    }
}

/// Turns a date phrase into a date: ISO dates, or `today` / `tonight` /
/// `tomorrow` relative to `today`.
pub fn resolve_date(phrase: &str, today: NaiveDate) -> Option<NaiveDate> {
    let p = phrase.trim().to_lowercase();
    match p.as_str() {
        "today" | "tonight" => Some(today),
        "tomorrow" => Some(today + Duration::days(1)),
        _ => NaiveDate::parse_from_str(&p, "%Y-%m-%d").ok(),
    }
}

/// Engine adapter: informs the weather for the believed location and date.
pub struct WeatherKnowledge {
    store: WeatherStore,
    today: NaiveDate,
    location_concept: String,
    date_concept: String,
}

impl WeatherKnowledge {
    pub fn new(store: WeatherStore, today: NaiveDate) -> Self {
        WeatherKnowledge {
            store,
            today,
            location_concept: "location".into(),
            date_concept: "date_time".into(),
        }
    }

    pub fn store(&self) -> &WeatherStore {
        &self.store
    }
}

impl KnowledgeSource for WeatherKnowledge {
    fn lookup(&self, _: &str, beliefs: &Beliefs) -> Result<Option<BTreeMap<String, String>>, KnowledgeError> {
        let (Some(location), Some(when)) = (beliefs.value(&self.location_concept), beliefs.value(&self.date_concept))
        else {
            return Ok(None);
        };
        let when = when.to_string();
        let Some(date) = resolve_date(&when, self.today) else {
            return Ok(None);
        };
        Ok(self.store.weather_lookup(&location.to_string(), date).map(|r| {
            let mut slots = r.entity();
            slots.insert("when".into(), when.to_lowercase());
            slots
        }))
    }
}
