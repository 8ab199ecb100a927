//! GPS ingestion, denoising, staypoint detection and corpus assembly.

mod corpus;
mod extract;
mod gps;
mod home;
mod meanshift;
mod staypoint;

pub use corpus::{build_city_corpus, read_corpus, write_corpus, MobilityCorpus, UserSequence, UserStaypoints};
pub use extract::{extract_corpus, ExtractParams};
pub use gps::{parse_gps_records, GpsRecord, GPS_HEADER, ParsedGps, RowError, RowErrorKind, UserTrack};
pub use home::{estimate_home, estimate_home_key, night_seconds};
pub use meanshift::{denoise_track, mean_shift_denoise, MEAN_SHIFT_MAX_ITER, MEAN_SHIFT_TOL_M};
pub use staypoint::{detect_stay_runs, extract_stay_events, extract_staypoints, StayEvent, StayParams, Staypoint};

use crate::geo::GridError;

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad GPS header {found:?}, expected user_id,timestamp,longitude,latitude")]
    Header { found: Vec<String> },
    #[error("cannot estimate a home from an empty staypoint list")]
    NoStaypoints,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported corpus format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
}
