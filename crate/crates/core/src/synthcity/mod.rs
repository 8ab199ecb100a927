//! Deterministic synthetic cities: typed landuse layouts, agents with
//! type-conditioned routines, their staypoint schedules and GPS traces.

mod layout;
mod schedule;
mod spec;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::FineCell;
use crate::geo::GridSpec;
use crate::seed::derive_seed;
use crate::trajectory::{MobilityCorpus, UserSequence, UserTrack, GPS_HEADER};
use crate::types::{CityId, PlaceId};

pub use layout::PlaceType;
pub use schedule::{
    AgentTruth, MIN_CELL_GAP, MIN_STAY_S, STAY_FIX_S, TRAVEL_FIX_S, TRAVEL_S, TRIP_END_QUIET_M,
};
pub use spec::{CitySpec, DEFAULT_START_EPOCH};

use layout::Layout;
use schedule::{Allocation, TypedPlaces};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("{typed} typed places do not fit in {cells} cells")]
    Infeasible { typed: u64, cells: u64 },
    #[error("invalid city spec: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// What the generator knows and the pipeline has to rediscover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub city_id: CityId,
    pub spec: CitySpec,
    pub behavior_seed: u64,
    pub place_types: BTreeMap<PlaceId, PlaceType>,
    pub agents: Vec<AgentTruth>,
}

impl GroundTruth {
    pub fn place_type(&self, place: PlaceId) -> Option<PlaceType> {
        self.place_types.get(&place).copied()
    }

    pub fn places_of(&self, ty: PlaceType) -> Vec<PlaceId> {
        self.place_types
            .iter()
            .filter(|(_, &t)| t == ty)
            .map(|(&p, _)| p)
            .collect()
    }
}

/// One generated city. The corpus holds the scheduled staypoints; GPS
/// traces are rendered from it on demand.
#[derive(Debug, Clone)]
pub struct SyntheticCity {
    pub grid: GridSpec,
    pub landuse: Vec<FineCell>,
    pub corpus: MobilityCorpus,
    pub truth: GroundTruth,
    layout: Layout,
}

pub const GPS_FILE: &str = "gps.csv";
pub const LANDUSE_FILE: &str = "landuse.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const GRID_FILE: &str = "grid.json";

impl SyntheticCity {
    /// GPS trace of the `index`-th agent. Noise comes from its own stream, so
    /// traces can be rendered in any order.
    pub fn gps_track(&self, index: usize) -> UserTrack {
        let seq = &self.corpus.sequences[index];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.truth.behavior_seed, &format!("gps/{index}")));
        UserTrack {
            user_id: seq.user_id.clone(),
            records: schedule::render_gps(
                &seq.user_id,
                &seq.staypoints,
                &self.layout,
                self.truth.spec.gps_sigma_m,
                &mut rng,
            ),
        }
    }

    pub fn write_gps_csv(&self, path: &Path) -> Result<(), SynthError> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", GPS_HEADER.join(","))?;
        for i in 0..self.corpus.sequences.len() {
            for r in self.gps_track(i).records {
                writeln!(out, "{},{},{:.7},{:.7}", r.user_id, r.timestamp, r.longitude, r.latitude)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_landuse_csv(&self, path: &Path) -> Result<(), SynthError> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "fine_x,fine_y,category_id")?;
        for c in &self.landuse {
            writeln!(out, "{},{},{}", c.fine_x, c.fine_y, c.category_id)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `gps.csv`, `landuse.csv`, `truth.json` and `grid.json` into
    /// `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SynthError> {
        fs::create_dir_all(dir)?;
        self.write_gps_csv(&dir.join(GPS_FILE))?;
        self.write_landuse_csv(&dir.join(LANDUSE_FILE))?;
        fs::write(dir.join(TRUTH_FILE), serde_json::to_string_pretty(&self.truth)? + "\n")?;
        fs::write(dir.join(GRID_FILE), serde_json::to_string_pretty(&self.grid)? + "\n")?;
        Ok(())
    }
}

/// Generates a city whose behavior seed is derived from its layout seed.
pub fn generate_city(spec: &CitySpec) -> Result<SyntheticCity, SynthError> {
    generate_with_behavior(spec, derive_seed(spec.seed, "behavior"))
}

/// Two cities with independent layouts (their own `seed`s) and agents drawn
/// under the same routine and the same behavior seed. With equal specs apart
/// from the name, the two corpora are identical.
pub fn generate_city_pair(
    spec_phi: &CitySpec,
    spec_psi: &CitySpec,
    behavior_seed: u64,
) -> Result<(SyntheticCity, SyntheticCity), SynthError> {
    if spec_phi.name == spec_psi.name {
        return Err(SynthError::Invalid(format!("both cities are named {:?}", spec_phi.name)));
    }
    Ok((
        generate_with_behavior(spec_phi, behavior_seed)?,
        generate_with_behavior(spec_psi, behavior_seed)?,
    ))
}

fn generate_with_behavior(spec: &CitySpec, behavior_seed: u64) -> Result<SyntheticCity, SynthError> {
    spec.validate()?;
    let city_id = spec.city_id()?;
    let mut layout_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "layout"));
    let layout = layout::generate_layout(spec, &mut layout_rng);
    let mut landuse_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "landuse"));
    let landuse = layout::landuse_cells(&layout, &mut landuse_rng);

    let places = TypedPlaces::new(&layout);
    let mut alloc = Allocation::new(&places, &mut ChaCha8Rng::seed_from_u64(derive_seed(behavior_seed, "allocation")));
    let width = (spec.n_agents as f64).log10().floor() as usize + 1;
    let mut agents = Vec::with_capacity(spec.n_agents as usize);
    let mut sequences = Vec::with_capacity(spec.n_agents as usize);
    for i in 0..spec.n_agents as usize {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(behavior_seed, &format!("agent/{i}")));
        let agent = schedule::draw_agent(format!("u{i:0width$}"), &layout, &mut alloc, &mut rng);
        let staypoints = schedule::schedule_agent(&agent, spec, &layout, &places, &mut rng);
        sequences.push(UserSequence {
            user_id: agent.user_id.clone(),
            staypoints,
        });
        agents.push(agent);
    }
    let grid = spec.grid();
    let place_types = layout
        .types
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.map(|t| (PlaceId(i as u32), t)))
        .collect();
    Ok(SyntheticCity {
        corpus: MobilityCorpus::new(city_id.clone(), grid.clone(), sequences),
        truth: GroundTruth {
            city_id,
            spec: spec.clone(),
            behavior_seed,
            place_types,
            agents,
        },
        grid,
        landuse,
        layout,
    })
}
