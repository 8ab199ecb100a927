use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geo::GridSpec;
use crate::types::{CityId, PlaceId};

use super::{Staypoint, TrajectoryError};

pub const CORPUS_FORMAT_VERSION: u32 = 1;

/// Per-user input to corpus assembly. `home` is `None` when the user's home
/// could not be placed on the city grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UserStaypoints {
    pub user_id: String,
    pub home: Option<PlaceId>,
    pub staypoints: Vec<Staypoint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSequence {
    pub user_id: String,
    pub staypoints: Vec<Staypoint>,
}

/// All staypoint sequences of the users living in one city.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityCorpus {
    pub city_id: CityId,
    pub grid: GridSpec,
    pub sequences: Vec<UserSequence>,
    pub place_visit_counts: BTreeMap<PlaceId, u64>,
}

impl MobilityCorpus {
    pub fn new(city_id: CityId, grid: GridSpec, sequences: Vec<UserSequence>) -> Self {
        let mut place_visit_counts = BTreeMap::new();
        for seq in &sequences {
            for sp in &seq.staypoints {
                *place_visit_counts.entry(sp.place).or_insert(0) += 1;
            }
        }
        MobilityCorpus {
            city_id,
            grid,
            sequences,
            place_visit_counts,
        }
    }

    /// Number of distinct visited places.
    pub fn n_places(&self) -> usize {
        self.place_visit_counts.len()
    }

    pub fn n_staypoints(&self) -> usize {
        self.sequences.iter().map(|s| s.staypoints.len()).sum()
    }

    /// Visited places by descending visit count, ties by ascending id.
    pub fn ranked_places(&self) -> Vec<(PlaceId, u64)> {
        let mut ranked: Vec<(PlaceId, u64)> =
            self.place_visit_counts.iter().map(|(&p, &c)| (p, c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }
}

/// Keeps the users whose home lies on the city's grid and tallies visits.
pub fn build_city_corpus(users: Vec<UserStaypoints>, city_id: CityId, grid: GridSpec) -> MobilityCorpus {
    let sequences = users
        .into_iter()
        .filter(|u| u.home.is_some_and(|h| grid.col_row(h).is_ok()))
        .filter_map(|u| {
            let staypoints: Vec<Staypoint> = u
                .staypoints
                .into_iter()
                .filter(|s| grid.col_row(s.place).is_ok())
                .collect();
            (!staypoints.is_empty()).then_some(UserSequence {
                user_id: u.user_id,
                staypoints,
            })
        })
        .collect();
    MobilityCorpus::new(city_id, grid, sequences)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusSidecar {
    format_version: u32,
    city_id: CityId,
    grid: GridSpec,
    place_visit_counts: BTreeMap<PlaceId, u64>,
}

/// Writes `user<TAB>place:enter:duration<TAB>...` lines plus the JSON sidecar.
pub fn write_corpus(corpus: &MobilityCorpus, tsv: &Path, sidecar: &Path) -> Result<(), TrajectoryError> {
    let mut out = BufWriter::new(File::create(tsv)?);
    for seq in &corpus.sequences {
        if seq.user_id.contains(['\t', '\n', '\r']) {
            return Err(TrajectoryError::Format {
                line: 0,
                message: format!("user id {:?} contains a tab or newline", seq.user_id),
            });
        }
        write!(out, "{}", seq.user_id)?;
        for sp in &seq.staypoints {
            write!(out, "\t{}:{}:{}", sp.place, sp.enter_time, sp.duration)?;
        }
        writeln!(out)?;
    }
    out.flush()?;

    let side = CorpusSidecar {
        format_version: CORPUS_FORMAT_VERSION,
        city_id: corpus.city_id.clone(),
        grid: corpus.grid.clone(),
        place_visit_counts: corpus.place_visit_counts.clone(),
    };
    let mut f = BufWriter::new(File::create(sidecar)?);
    serde_json::to_writer_pretty(&mut f, &side)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn read_corpus(tsv: &Path, sidecar: &Path) -> Result<MobilityCorpus, TrajectoryError> {
    let side: CorpusSidecar = serde_json::from_reader(BufReader::new(File::open(sidecar)?))?;
    if side.format_version != CORPUS_FORMAT_VERSION {
        return Err(TrajectoryError::Version {
            found: side.format_version,
            expected: CORPUS_FORMAT_VERSION,
        });
    }
    side.grid.validate()?;

    let mut sequences = Vec::new();
    for (i, line) in BufReader::new(File::open(tsv)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| TrajectoryError::Format { line: i + 1, message };
        let mut fields = line.split('\t');
        let user_id = fields.next().unwrap_or_default().to_owned();
        let mut staypoints = Vec::new();
        for field in fields {
            let parts: Vec<&str> = field.split(':').collect();
            let [p, e, d] = parts[..] else {
                return Err(bad(format!("bad staypoint {field:?}")));
            };
            let parse = |s: &str| s.parse::<i64>().map_err(|_| bad(format!("bad staypoint {field:?}")));
            let place: PlaceId = p.parse().map_err(|_| bad(format!("bad place {p:?}")))?;
            side.grid.col_row(place)?;
            staypoints.push(Staypoint {
                place,
                enter_time: parse(e)?,
                duration: parse(d)?,
            });
        }
        sequences.push(UserSequence { user_id, staypoints });
    }

    let corpus = MobilityCorpus::new(side.city_id, side.grid, sequences);
    if corpus.place_visit_counts != side.place_visit_counts {
        return Err(TrajectoryError::Format {
            line: 0,
            message: "sidecar visit counts disagree with the sequences".into(),
        });
    }
    Ok(corpus)
}
