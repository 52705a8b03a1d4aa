//! Loading the portal configuration: ontology, task tree, lexicon,
//! templates and fixture data. Every file has a shipped default compiled
//! into the binary; a path overrides it.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::NaiveDate;
use thiserror::Error;

use crate::act::{Act, ActValue, DialogAct};
use crate::agents::{BistroAgent, RestaurantStore, WeatherKnowledge, WeatherStore};
use crate::chatbot::{self, ChatbotError, EmbeddingIndex, ExamplePair};
use crate::engine::{Action, Engine, EngineError, EngineSettings, InvalidTree, TaskTree};
use crate::nlg::{NlgError, TemplateSet};
use crate::nlu::{Lexicon, LexiconError};
use crate::ontology::{Ontology, OntologyError, Pool};
use crate::protocol::knowledge::KnowledgeError;
use crate::portal::{Portal, PortalSettings};
use crate::protocol::{AgentDirectory, InProcessAgent, RemoteAgent, RemoteConnector};

pub const SHIPPED_ONTOLOGY: &str = include_str!("../data/ontology.toml");
pub const SHIPPED_TREE: &str = include_str!("../data/tree.toml");
pub const SHIPPED_LEXICON: &str = include_str!("../data/lexicon.txt");
pub const SHIPPED_TEMPLATES: &str = include_str!("../data/templates.txt");
pub const SHIPPED_CHAT_PAIRS: &str = include_str!("../data/chat_pairs.tsv");
pub const SHIPPED_WEATHER: &str = include_str!("../data/weather.csv");
pub const SHIPPED_RESTAURANTS: &str = include_str!("../data/restaurants.csv");

/// Endpoint of the bundled restaurant agent when it runs in-process.
pub const INPROC_BISTRO: &str = "inproc://bistro";

/// "Today" for relative dates in the shipped weather data.
pub fn shipped_weather_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2017, 3, 1).expect("valid date")
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("ontology: {0}")]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Tree(#[from] InvalidTree),
    #[error("lexicon: {0}")]
    Lexicon(#[from] LexiconError),
    #[error("templates: {0}")]
    Templates(#[from] NlgError),
    #[error("chat pairs: {0}")]
    Chatbot(#[from] ChatbotError),
    #[error("fixture data: {0}")]
    Knowledge(#[from] KnowledgeError),
    #[error("{0}")]
    Invalid(String),
}

impl From<EngineError> for ConfigError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidTree(t) => ConfigError::Tree(t),
            EngineError::Ontology(o) => ConfigError::Ontology(o),
            other => ConfigError::Invalid(other.to_string()),
        }
    }
}

/// Optional file overrides; `None` means the shipped default.
#[derive(Debug, Clone, Default)]
pub struct ConfigPaths {
    pub ontology: Option<PathBuf>,
    pub tree: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub chat_pairs: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub restaurants: Option<PathBuf>,
}

fn read(path: &Option<PathBuf>, shipped: &'static str) -> Result<String, ConfigError> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.clone(),
            source,
        }),
        None => Ok(shipped.to_string()),
    }
}

/// Everything needed to build engines and portals. Immutable once loaded.
#[derive(Clone)]
pub struct Config {
    pub ontology: Arc<Ontology>,
    pub tree: TaskTree,
    pub lexicon: Arc<Lexicon>,
    pub templates: Arc<TemplateSet>,
    pub chat_pairs: Vec<ExamplePair>,
    pub weather: WeatherStore,
    pub restaurants: Arc<RestaurantStore>,
    pub weather_date: NaiveDate,
    pub settings: EngineSettings,
}

impl Config {
    pub fn shipped() -> Result<Self, ConfigError> {
        Self::load(&ConfigPaths::default())
    }

    pub fn load(paths: &ConfigPaths) -> Result<Self, ConfigError> {
        let ontology = Ontology::from_toml(&read(&paths.ontology, SHIPPED_ONTOLOGY)?)?;
        let tree = TaskTree::from_toml(&read(&paths.tree, SHIPPED_TREE)?)?;
        let lexicon = Lexicon::parse(&read(&paths.lexicon, SHIPPED_LEXICON)?)?;
        let templates = TemplateSet::parse(&read(&paths.templates, SHIPPED_TEMPLATES)?)?;
        let chat_pairs = chatbot::parse_pairs(&read(&paths.chat_pairs, SHIPPED_CHAT_PAIRS)?)?;
        let weather = WeatherStore::from_csv(&read(&paths.weather, SHIPPED_WEATHER)?)?;
        let restaurants = RestaurantStore::from_csv(&read(&paths.restaurants, SHIPPED_RESTAURANTS)?)?;
        let config = Config {
            ontology: Arc::new(ontology),
            tree,
            lexicon: Arc::new(lexicon),
            templates: Arc::new(templates),
            chat_pairs,
            weather,
            restaurants: Arc::new(restaurants),
            weather_date: shipped_weather_date(),
            settings: EngineSettings::default(),
        };
        config.validate()?;
        Ok(config)
    }

    /// Redirects a remote concept, e.g. to an HTTP agent.
    pub fn set_endpoint(&mut self, concept: &str, endpoint: &str) -> Result<(), ConfigError> {
        Arc::make_mut(&mut self.ontology).set_endpoint(concept, endpoint)?;
        Ok(())
    }

    pub fn endpoints(&self) -> BTreeMap<String, String> {
        self.ontology
            .pool(Pool::Remote)
            .filter_map(|name| {
                let c = self.ontology.get(name)?;
                Some((name.to_string(), c.endpoint.clone()?))
            })
            .collect()
    }

    /// Every act the tree can produce must have a template.
    fn validate(&self) -> Result<(), ConfigError> {
        let mut tree = self.tree.clone();
        tree.bind(&self.ontology)?;
        let mut needed: Vec<(DialogAct, Option<String>)> = vec![
            (DialogAct::ConfirmImplicit, None),
            (DialogAct::ConfirmExplicit, None),
            (DialogAct::Rephrase, None),
        ];
        for (_, node) in tree.nodes() {
            match &node.action {
                Some(Action::Emit(act, _)) => needed.push((*act, None)),
                Some(Action::Ask(c)) => needed.push((DialogAct::Ask, Some(c.clone()))),
                Some(Action::Confirm(_)) => {}
                Some(Action::InformFromKnowledge(c)) => {
                    needed.push((DialogAct::Inform, Some(c.clone())));
                    needed.push((DialogAct::Inform, Some(format!("{c}.missing"))));
                    for d in self.ontology.transitive_deps(c.as_str()) {
                        needed.push((DialogAct::Ask, Some(d)));
                    }
                }
                Some(Action::CallRemote(_)) => needed.push((DialogAct::Handoff, None)),
                None => {}
            }
        }
        for (act, class) in needed {
            if self.templates.lookup(act, class.as_deref()).is_none() {
                return Err(NlgError::MissingTemplate { act, class }.into());
            }
            if act == DialogAct::Ask {
                let probe = Act::new(act, ActValue::concept(class.unwrap_or_default()));
                self.templates.check(&probe)?;
            }
        }
        Ok(())
    }

    pub fn chatbot(&self) -> Result<EmbeddingIndex, ConfigError> {
        Ok(EmbeddingIndex::build(self.chat_pairs.clone())?)
    }

    /// The in-process restaurant agent over the loaded listings.
    pub fn bistro(&self) -> Arc<dyn RemoteAgent> {
        Arc::new(InProcessAgent::new(Arc::new(BistroAgent::new(self.restaurants.clone()))))
    }

    /// A directory with the bundled agent registered at [`INPROC_BISTRO`].
    pub fn directory(&self) -> AgentDirectory {
        let dir = AgentDirectory::new();
        dir.register(INPROC_BISTRO, self.bistro());
        dir
    }

    /// An engine over this configuration, with the weather source and the
    /// chatbot wired in.
    pub fn engine(&self, connector: Arc<dyn RemoteConnector>) -> Result<Engine, ConfigError> {
        let weather = WeatherKnowledge::new(self.weather.clone(), self.weather_date);
        let engine = Engine::new(self.tree.clone(), self.ontology.clone(), connector)?
            .with_knowledge("weather", Arc::new(weather))
            .with_chatbot(Arc::new(self.chatbot()?))
            .with_settings(self.settings.clone());
        Ok(engine)
    }

    /// A portal over this configuration.
    pub fn portal(&self, connector: Arc<dyn RemoteConnector>, settings: PortalSettings) -> Result<Portal, ConfigError> {
        Ok(Portal::new(self.engine(connector)?, self.lexicon.clone(), self.templates.clone(), settings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_loads() {
        let c = Config::shipped().unwrap();
        assert!(c.chat_pairs.len() >= 50);
        assert!(c.restaurants.records().len() >= 20);
        assert_eq!(c.endpoints()["bistro"], INPROC_BISTRO);
        c.engine(Arc::new(c.directory())).unwrap();
    }

    #[test]
    fn endpoint_override() {
        let mut c = Config::shipped().unwrap();
        c.set_endpoint("bistro", "http://127.0.0.1:9/").unwrap();
        assert_eq!(c.endpoints()["bistro"], "http://127.0.0.1:9/");
        assert!(c.set_endpoint("weather", "http://x").is_err());
        assert!(c.set_endpoint("nope", "http://x").is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let paths = ConfigPaths {
            ontology: Some("/nonexistent/ontology.toml".into()),
            ..Default::default()
        };
        assert!(matches!(Config::load(&paths), Err(ConfigError::Io { .. })));
    }

    #[test]
    fn templates_must_cover_the_tree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.txt");
        std::fs::write(&path, "HELLO => hi\n").unwrap();
        let paths = ConfigPaths {
            templates: Some(path),
            ..Default::default()
        };
        assert!(matches!(
            Config::load(&paths),
            Err(ConfigError::Templates(NlgError::MissingTemplate { .. }))
        ));
    }
}
