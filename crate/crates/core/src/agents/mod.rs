//! Built-in agents: file-backed knowledge stores and the reference text
//! remote agent.

pub mod reference;
pub mod restaurants;
pub mod weather;

pub use reference::{BistroAgent, BISTRO_NAME};
pub use restaurants::{PriceRange, RestaurantRecord, RestaurantStore};
pub use weather::{resolve_date, WeatherKnowledge, WeatherRecord, WeatherStore};
