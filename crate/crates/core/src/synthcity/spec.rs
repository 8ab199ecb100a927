use serde::{Deserialize, Serialize};

use crate::geo::GridSpec;
use crate::types::CityId;

use super::SynthError;

/// 2016-02-01 00:00 in UTC+9, a Monday.
pub const DEFAULT_START_EPOCH: i64 = 1_454_252_400;

/// Layout and population of one synthetic city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CitySpec {
    pub name: String,
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub cell_size_m: f64,
    pub n_cols: u32,
    pub n_rows: u32,
    pub n_business: u32,
    pub n_shopping: u32,
    pub n_residential: u32,
    pub n_farmland: u32,
    /// Civic and leisure places visited on errands.
    pub n_other: u32,
    pub n_agents: u32,
    pub days: u32,
    /// Local midnight that starts day 0; day 0 is treated as a Monday.
    pub start_epoch: i64,
    pub utc_offset_hours: i32,
    /// Standard deviation of activity start times, minutes.
    pub time_jitter_min: f64,
    /// Per-axis standard deviation of GPS fixes, metres.
    pub gps_sigma_m: f64,
    /// Layout seed; also seeds behavior when the city is generated alone.
    pub seed: u64,
}

impl Default for CitySpec {
    fn default() -> Self {
        CitySpec {
            name: "northport".into(),
            origin_lon: 130.60,
            origin_lat: 32.70,
            cell_size_m: 1000.0,
            n_cols: 42,
            n_rows: 42,
            n_business: 200,
            n_shopping: 60,
            n_residential: 600,
            n_farmland: 250,
            n_other: 600,
            n_agents: 2000,
            days: 7,
            start_epoch: DEFAULT_START_EPOCH,
            utc_offset_hours: 9,
            time_jitter_min: 20.0,
            gps_sigma_m: 20.0,
            seed: 11,
        }
    }
}

impl CitySpec {
    /// The second city of the default pair: a different size, origin and
    /// layout seed, same behavior.
    pub fn default_second() -> Self {
        CitySpec {
            name: "southvale".into(),
            origin_lon: 133.80,
            origin_lat: 34.55,
            n_cols: 48,
            n_rows: 40,
            n_business: 215,
            n_shopping: 65,
            n_residential: 640,
            n_farmland: 300,
            n_other: 640,
            seed: 23,
            ..CitySpec::default()
        }
    }

    pub fn n_typed(&self) -> u64 {
        [self.n_business, self.n_shopping, self.n_residential, self.n_farmland, self.n_other]
            .iter()
            .map(|&n| n as u64)
            .sum()
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.origin_lon, self.origin_lat, self.cell_size_m, self.n_cols, self.n_rows)
    }

    pub fn city_id(&self) -> Result<CityId, SynthError> {
        CityId::new(self.name.clone()).map_err(|e| SynthError::Invalid(e.to_string()))
    }

    pub fn utc_offset_s(&self) -> i64 {
        self.utc_offset_hours as i64 * 3600
    }

    pub fn end_epoch(&self) -> i64 {
        self.start_epoch + self.days as i64 * 86_400
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.grid().validate().map_err(|e| SynthError::Invalid(e.to_string()))?;
        self.city_id()?;
        let cells = self.grid().n_cells() as u64;
        if self.n_typed() > cells {
            return Err(SynthError::Infeasible {
                typed: self.n_typed(),
                cells,
            });
        }
        if self.n_residential == 0 {
            return Err(SynthError::Invalid("at least one residential place is needed for homes".into()));
        }
        if self.n_agents == 0 {
            return Err(SynthError::Invalid("n_agents must be at least 1".into()));
        }
        if self.days == 0 {
            return Err(SynthError::Invalid("days must be at least 1".into()));
        }
        if !(-12..=14).contains(&self.utc_offset_hours) {
            return Err(SynthError::Invalid(format!("utc offset {}h", self.utc_offset_hours)));
        }
        for (name, v) in [("time_jitter_min", self.time_jitter_min), ("gps_sigma_m", self.gps_sigma_m)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::Invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}
