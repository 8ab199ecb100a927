use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::geo::GridSpec;
use crate::types::PlaceId;

use super::EvaluationError;

pub const N_CATEGORIES: usize = 17;

/// Fine cells per place along each axis.
pub const FINE_PER_PLACE: i64 = 10;

/// Names of categories 1..=17 of the 100 m urban landuse mesh.
pub const CATEGORY_NAMES: [&str; N_CATEGORIES] = [
    "paddy_field",
    "other_agricultural",
    "forest",
    "wasteland",
    "high_rise_building",
    "factory",
    "low_rise_building",
    "dense_low_rise_building",
    "road",
    "railway",
    "public_facility",
    "vacant_land",
    "park_green",
    "river_lake",
    "beach",
    "sea",
    "golf_course",
];

/// One 100 m cell; `fine_x`/`fine_y` count fine cells east/north of the grid
/// origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineCell {
    pub fine_x: i64,
    pub fine_y: i64,
    pub category_id: u8,
}

pub fn parse_landuse_csv<R: Read>(reader: R) -> Result<Vec<FineCell>, EvaluationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["fine_x", "fine_y", "category_id"] {
        return Err(EvaluationError::Landuse {
            line: 1,
            message: format!("expected header fine_x,fine_y,category_id, found {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut cells = Vec::new();
    for row in rdr.deserialize() {
        let cell: FineCell = row?;
        if !(1..=N_CATEGORIES as u8).contains(&cell.category_id) {
            return Err(EvaluationError::Landuse {
                line: cells.len() as u64 + 2,
                message: format!("category {} outside 1..={N_CATEGORIES}", cell.category_id),
            });
        }
        cells.push(cell);
    }
    Ok(cells)
}

/// Per-place category counts over the nested 10 x 10 fine cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanduseGrid {
    pub counts: BTreeMap<PlaceId, [u32; N_CATEGORIES]>,
    /// Fine cells that fell outside every place.
    pub n_outside: u64,
}

impl LanduseGrid {
    /// Category (1-based) with the most fine cells; ties go to the smaller
    /// id. `None` for places without landuse data.
    pub fn dominant(&self, place: PlaceId) -> Option<u8> {
        let counts = self.counts.get(&place)?;
        let (best, &n) = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        (n > 0).then_some(best as u8 + 1)
    }
}

pub fn aggregate_landuse(cells: &[FineCell], grid: &GridSpec) -> Result<LanduseGrid, EvaluationError> {
    let mut counts: BTreeMap<PlaceId, [u32; N_CATEGORIES]> = BTreeMap::new();
    let mut seen = HashSet::with_capacity(cells.len());
    let mut n_outside = 0;
    for (k, c) in cells.iter().enumerate() {
        if !seen.insert((c.fine_x, c.fine_y)) {
            return Err(EvaluationError::Landuse {
                line: k as u64 + 2,
                message: format!("fine cell ({}, {}) listed twice", c.fine_x, c.fine_y),
            });
        }
        if !(1..=N_CATEGORIES as u8).contains(&c.category_id) {
            return Err(EvaluationError::Landuse {
                line: k as u64 + 2,
                message: format!("category {} outside 1..={N_CATEGORIES}", c.category_id),
            });
        }
        let (col, row) = (c.fine_x.div_euclid(FINE_PER_PLACE), c.fine_y.div_euclid(FINE_PER_PLACE));
        if c.fine_x < 0 || c.fine_y < 0 || col >= grid.n_cols as i64 || row >= grid.n_rows as i64 {
            n_outside += 1;
            continue;
        }
        let place = grid.place_id(col as u32, row as u32);
        counts.entry(place).or_insert([0; N_CATEGORIES])[c.category_id as usize - 1] += 1;
    }
    if n_outside > 0 {
        log::warn!("{n_outside} landuse cells lie outside the grid");
    }
    Ok(LanduseGrid { counts, n_outside })
}

/// Which landuse categories make a place count as each evaluation label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelMapping(pub BTreeMap<String, Vec<u8>>);

impl Default for LabelMapping {
    /// business: high-rise buildings; shopping: dense low-rise buildings
    /// (shopping streets); residential: low-rise buildings; farmland: paddy
    /// and other agricultural land.
    fn default() -> Self {
        LabelMapping(BTreeMap::from([
            ("business".to_owned(), vec![5]),
            ("shopping".to_owned(), vec![8]),
            ("residential".to_owned(), vec![7]),
            ("farmland".to_owned(), vec![1, 2]),
        ]))
    }
}

impl LabelMapping {
    pub fn categories(&self, label: &str) -> Result<&[u8], EvaluationError> {
        self.0
            .get(label)
            .map(Vec::as_slice)
            .ok_or_else(|| EvaluationError::UnknownLabel(label.to_owned()))
    }
}
