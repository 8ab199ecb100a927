//! Self-supervised next-staypoint model whose place table yields the
//! per-city embedding matrix, plus the two-city joint variant.

mod checkpoint;
mod config;
pub mod features;
mod matrix;
pub mod network;
mod optim;
mod params;
mod train;
mod vocab;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use matrix::EmbeddingMatrix;
pub use optim::{clip_global_norm, Adam};
pub use params::{LstmLayer, Params};
pub use train::{
    export_embeddings, is_validation_user, joint_space_tag, next_place_distribution, train_joint_moblstm,
    train_moblstm, TrainedModel,
};
pub use vocab::{CitySlice, Vocabulary, UNK};

use crate::types::CityId;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),
    #[error("city id {0} appears in both corpora")]
    CityCollision(CityId),
    #[error("city {0} is not in the model vocabulary")]
    UnknownCity(CityId),
    #[error("prediction needs at least one staypoint of context")]
    EmptyPrefix,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
