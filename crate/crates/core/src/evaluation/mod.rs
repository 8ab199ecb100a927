//! Set-level similarity metrics with random baselines, landuse-based
//! validation within and across cities, the anchor-count sweep and
//! per-place similarity maps.

mod landuse;
mod metrics;
mod report;
mod simmap;

pub use landuse::{
    aggregate_landuse, parse_landuse_csv, FineCell, LabelMapping, LanduseGrid, CATEGORY_NAMES, FINE_PER_PLACE,
    N_CATEGORIES,
};
pub use metrics::{amcs, amnd, cos_sim, mutual_metric, norm_dist, random_baseline, Metric, PlaceSet};
pub use report::{
    inter_city_report, intra_city_report, label_set, sensitivity_sweep, EvalSettings, MetricReport, ReportKind,
    SensitivityCurve, SensitivityPoint, ValidationReport,
};
pub use simmap::{similarity_map, SimilarityEntry, SimilarityMap, TOP_FRACTION};

use crate::embedding::EmbeddingError;
use crate::geo::GridError;
use crate::translation::TranslationError;
use crate::types::{CityId, PlaceId};

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("the two sets have no distinct pairs")]
    NoPairs,
    #[error("place {place} has no embedding in {city}")]
    MissingPlace { city: CityId, place: PlaceId },
    #[error("baseline pool has {available} places but {needed} are needed")]
    InsufficientPool { needed: usize, available: usize },
    #[error("duplicate place {0} in a place set")]
    DuplicatePlace(PlaceId),
    #[error("landuse line {line}: {message}")]
    Landuse { line: u64, message: String },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
