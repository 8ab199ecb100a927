//! Place embeddings learned from staypoint sequences, and their translation
//! between cities.

pub mod config;
pub mod embedding;
pub mod evaluation;
pub mod geo;
pub mod pipeline;
mod seed;
pub mod synthcity;
pub mod trajectory;
pub mod translation;
mod types;

pub use geo::{GridError, GridSpec};
pub use seed::derive_seed;
pub use types::{CityId, InvalidCityId, PlaceId};
