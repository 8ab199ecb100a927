//! Per-step inputs: place index, hour-of-day bucket, duration bucket.

use crate::trajectory::Staypoint;

use super::Vocabulary;
use crate::types::CityId;

pub const HOUR_BUCKETS: usize = 24;
pub const DURATION_BUCKETS: usize = 8;

/// Upper bounds (exclusive, seconds) of duration buckets 0..7; the last
/// bucket is open-ended.
const DURATION_EDGES: [i64; DURATION_BUCKETS - 1] = [
    1800,      // < 30 min
    3600,      // < 1 h
    2 * 3600,  // < 2 h
    4 * 3600,  // < 4 h
    8 * 3600,  // < 8 h
    16 * 3600, // < 16 h
    32 * 3600, // < 32 h
];

pub fn hour_bucket(enter_time: i64, utc_offset_s: i64) -> usize {
    ((enter_time + utc_offset_s).rem_euclid(86_400) / 3600) as usize
}

pub fn duration_bucket(duration_s: i64) -> usize {
    DURATION_EDGES
        .iter()
        .position(|&edge| duration_s < edge)
        .unwrap_or(DURATION_BUCKETS - 1)
}

/// Lookup indices for one staypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInput {
    pub place: usize,
    pub hour: usize,
    pub duration: usize,
}

impl StepInput {
    pub const PAD: StepInput = StepInput {
        place: 0,
        hour: 0,
        duration: 0,
    };

    pub fn from_staypoint(vocab: &Vocabulary, city: &CityId, sp: &Staypoint, utc_offset_s: i64) -> Self {
        StepInput {
            place: vocab.index_of(city, sp.place),
            hour: hour_bucket(sp.enter_time, utc_offset_s),
            duration: duration_bucket(sp.duration),
        }
    }
}
