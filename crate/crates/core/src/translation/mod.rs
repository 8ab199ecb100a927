//! Mapping one city's place embeddings into another city's space, either by
//! orthogonal Procrustes over a popularity-paired anchor dictionary or by
//! adversarially training a linear map.

mod adversarial;
mod anchors;
mod matrix;
mod procrustes;

pub use adversarial::{adversarial_align, AdvConfig, AdversarialOutcome};
pub use anchors::{build_anchor_dictionary, random_anchor_dictionary, AnchorDictionary, DEFAULT_ANCHORS};
pub use matrix::{apply_translation, Method, TranslationMatrix};
pub use procrustes::{orthogonal_procrustes, procrustes_align, procrustes_objective, ProcrustesFit};

use crate::embedding::EmbeddingError;
use crate::types::{CityId, PlaceId};

#[derive(Debug, thiserror::Error)]
pub enum TranslationError {
    #[error("anchor place {place} is missing from the embedding of {city}")]
    MissingPlace { city: CityId, place: PlaceId },
    #[error("{requested} anchors requested but {city} has only {available} visited places")]
    TooFewPlaces {
        requested: usize,
        city: CityId,
        available: usize,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("translation from {expected} cannot be applied to an embedding of {found}")]
    CityMismatch { expected: CityId, found: CityId },
    #[error("invalid adversarial configuration: {0}")]
    Config(String),
    #[error("adversarial training diverged at step {step}")]
    Diverged { step: usize },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}
