pub mod act;
pub mod chatbot;
pub mod nlg;
pub mod nlu;
pub mod ontology;
pub mod protocol;
pub mod text;
pub mod engine;
pub mod agents;
pub mod config;
pub mod portal;
