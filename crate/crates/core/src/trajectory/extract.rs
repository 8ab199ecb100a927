use serde::{Deserialize, Serialize};

use crate::geo::GridSpec;
use crate::types::CityId;

use super::{
    build_city_corpus, denoise_track, estimate_home, extract_staypoints, MobilityCorpus, ParsedGps, StayParams,
    UserStaypoints,
};

/// Settings of the GPS-to-corpus stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractParams {
    pub spatial_m: f64,
    pub temporal_s: i64,
    pub bandwidth_m: f64,
    /// Records per user considered by each mean-shift estimate.
    pub window: usize,
    /// Local time offset used by the nighttime home rule.
    pub utc_offset_s: i64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        let stay = StayParams::default();
        ExtractParams {
            spatial_m: stay.spatial_m,
            temporal_s: stay.temporal_s,
            bandwidth_m: 200.0,
            window: 50,
            utc_offset_s: 9 * 3600,
        }
    }
}

impl ExtractParams {
    pub fn stay_params(&self) -> StayParams {
        StayParams {
            spatial_m: self.spatial_m,
            temporal_s: self.temporal_s,
        }
    }
}

/// Denoises each track, extracts its staypoints, estimates the user's home
/// and assembles the city corpus.
pub fn extract_corpus(gps: &ParsedGps, params: &ExtractParams, city_id: CityId, grid: GridSpec) -> MobilityCorpus {
    let stay = params.stay_params();
    let users = gps
        .users
        .iter()
        .map(|track| {
            let denoised = denoise_track(&track.records, params.bandwidth_m, params.window);
            let staypoints = extract_staypoints(&denoised, &stay, &grid);
            UserStaypoints {
                user_id: track.user_id.clone(),
                home: estimate_home(&staypoints, params.utc_offset_s).ok(),
                staypoints,
            }
        })
        .collect();
    build_city_corpus(users, city_id, grid)
}
