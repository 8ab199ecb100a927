use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::evaluation::{FineCell, FINE_PER_PLACE};
use crate::geo::GridSpec;
use crate::types::PlaceId;

use super::CitySpec;

/// Functional type of a generated place. The first four names double as
/// evaluation labels; `Other` covers civic and leisure places that belong to
/// no label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceType {
    Business,
    Shopping,
    Residential,
    Farmland,
    Other,
}

impl PlaceType {
    pub const ALL: [PlaceType; 5] = [
        PlaceType::Business,
        PlaceType::Shopping,
        PlaceType::Residential,
        PlaceType::Farmland,
        PlaceType::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PlaceType::Business => "business",
            PlaceType::Shopping => "shopping",
            PlaceType::Residential => "residential",
            PlaceType::Farmland => "farmland",
            PlaceType::Other => "other",
        }
    }

    /// Landuse category that dominates this type's fine cells.
    pub fn landuse_category(self) -> u8 {
        match self {
            PlaceType::Business => 5,
            PlaceType::Shopping => 8,
            PlaceType::Residential => 7,
            PlaceType::Farmland => 1,
            PlaceType::Other => 11,
        }
    }

    fn secondary_categories(self) -> &'static [u8] {
        match self {
            PlaceType::Business => &[9, 11, 8, 6],
            PlaceType::Shopping => &[9, 5, 11, 13],
            PlaceType::Residential => &[9, 13, 8, 12],
            PlaceType::Farmland => &[2, 3, 14, 7],
            PlaceType::Other => &[9, 13, 6, 12],
        }
    }

    /// Spread of the log-normal attractiveness of places of this type. It
    /// only steers per-trip destinations; homes and jobs are allocated evenly.
    fn popularity_sigma(self) -> f64 {
        match self {
            PlaceType::Business => 0.25,
            PlaceType::Shopping => 0.3,
            PlaceType::Residential => 0.3,
            PlaceType::Farmland => 0.5,
            PlaceType::Other => 0.5,
        }
    }
}

impl fmt::Display for PlaceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Where each place sits, what it is, and how attractive it is.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub grid: GridSpec,
    /// Indexed by cell id; `None` for untyped cells (forest, water, ...).
    pub types: Vec<Option<PlaceType>>,
    /// Fixed visiting point of each cell in projected metres.
    pub points: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

impl Layout {
    pub fn places_of(&self, ty: PlaceType) -> Vec<PlaceId> {
        self.types
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == Some(ty))
            .map(|(i, _)| PlaceId(i as u32))
            .collect()
    }

    pub fn point(&self, place: PlaceId) -> (f64, f64) {
        self.points[place.0 as usize]
    }

    pub fn weight(&self, place: PlaceId) -> f64 {
        self.weights[place.0 as usize]
    }

    /// Chebyshev distance in cells.
    pub fn cell_distance(&self, a: PlaceId, b: PlaceId) -> u32 {
        let n = self.grid.n_cols;
        let (ac, ar) = (a.0 % n, a.0 / n);
        let (bc, br) = (b.0 % n, b.0 / n);
        ac.abs_diff(bc).max(ar.abs_diff(br))
    }
}

/// Places business at a downtown, shopping around it, farmland at the edge,
/// other places anywhere and homes in between; each choice is a noisy
/// ranking by distance from a randomly shifted centre.
pub(crate) fn generate_layout(spec: &CitySpec, rng: &mut ChaCha8Rng) -> Layout {
    let grid = spec.grid();
    let (nc, nr) = (grid.n_cols as f64, grid.n_rows as f64);
    let center = (
        nc * (0.5 + rng.random_range(-0.15..0.15)),
        nr * (0.5 + rng.random_range(-0.15..0.15)),
    );
    let max_r = (nc * nc + nr * nr).sqrt() / 2.0;
    let n = grid.n_cells() as usize;
    let radius: Vec<f64> = (0..n)
        .map(|i| {
            let (c, r) = ((i as u32 % grid.n_cols) as f64 + 0.5, (i as u32 / grid.n_cols) as f64 + 0.5);
            ((c - center.0).hypot(r - center.1) / max_r).min(1.0)
        })
        .collect();

    let mut types: Vec<Option<PlaceType>> = vec![None; n];
    let mut pick = |count: u32, score: &dyn Fn(f64) -> f64, noise: f64, ty: PlaceType, rng: &mut ChaCha8Rng| {
        let mut scored: Vec<(f64, usize)> = (0..n)
            .filter(|&i| types[i].is_none())
            .map(|i| (score(radius[i]) + noise * rng.random::<f64>(), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in scored.iter().take(count as usize) {
            types[i] = Some(ty);
        }
    };
    pick(spec.n_business, &|r| -r, 0.35, PlaceType::Business, rng);
    pick(spec.n_shopping, &|r| -0.7 * r, 0.5, PlaceType::Shopping, rng);
    pick(spec.n_farmland, &|r| r, 0.3, PlaceType::Farmland, rng);
    pick(spec.n_other, &|_| 0.0, 1.0, PlaceType::Other, rng);
    pick(spec.n_residential, &|r| -(r - 0.45).abs(), 0.5, PlaceType::Residential, rng);

    let s = grid.cell_size_m;
    let points = (0..n)
        .map(|i| {
            let (c, r) = ((i as u32 % grid.n_cols) as f64, (i as u32 / grid.n_cols) as f64);
            (
                (c + 0.5) * s + rng.random_range(-0.25..0.25) * s,
                (r + 0.5) * s + rng.random_range(-0.25..0.25) * s,
            )
        })
        .collect();
    let weights = types
        .iter()
        .map(|t| {
            let z: f64 = rng.sample(StandardNormal);
            t.map_or(0.0, |ty| (ty.popularity_sigma() * z).exp())
        })
        .collect();
    Layout {
        grid,
        types,
        points,
        weights,
    }
}

/// Categories for untyped cells (forest, wasteland, vacant land, water).
const BACKGROUND: [u8; 4] = [3, 4, 12, 14];

/// 100 fine cells per place. The primary category of a typed place covers at
/// least 55 of them, so it always dominates.
pub(crate) fn landuse_cells(layout: &Layout, rng: &mut ChaCha8Rng) -> Vec<FineCell> {
    let grid = &layout.grid;
    let per_place = (FINE_PER_PLACE * FINE_PER_PLACE) as usize;
    let mut out = Vec::with_capacity(layout.types.len() * per_place);
    for (i, ty) in layout.types.iter().enumerate() {
        let (primary, secondary): (u8, &[u8]) = match ty {
            Some(t) => (t.landuse_category(), t.secondary_categories()),
            None => {
                let p = BACKGROUND[rng.random_range(0..BACKGROUND.len())];
                (p, &[9, 12, 13])
            }
        };
        let n_primary = rng.random_range(55..=75);
        let mut cats: Vec<u8> = (0..per_place)
            .map(|k| {
                if k < n_primary {
                    primary
                } else {
                    secondary[rng.random_range(0..secondary.len())]
                }
            })
            .collect();
        cats.shuffle(rng);
        let (col, row) = (i as i64 % grid.n_cols as i64, i as i64 / grid.n_cols as i64);
        for (k, category_id) in cats.into_iter().enumerate() {
            out.push(FineCell {
                fine_x: col * FINE_PER_PLACE + k as i64 % FINE_PER_PLACE,
                fine_y: row * FINE_PER_PLACE + k as i64 / FINE_PER_PLACE,
                category_id,
            });
        }
    }
    out
}
