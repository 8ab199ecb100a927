//! Local planar geometry and the city grid.
//!
//! Distances use an equirectangular projection about a reference latitude,
//! which is accurate to well under a percent over a few tens of kilometres.

use serde::{Deserialize, Serialize};

use crate::types::PlaceId;

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalProjection {
    origin_lon: f64,
    origin_lat: f64,
    m_per_deg_lon: f64,
    m_per_deg_lat: f64,
}

impl LocalProjection {
    pub fn new(origin_lon: f64, origin_lat: f64, ref_latitude: f64) -> Self {
        let m_per_deg_lat = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        LocalProjection {
            origin_lon,
            origin_lat,
            m_per_deg_lon: m_per_deg_lat * ref_latitude.to_radians().cos(),
            m_per_deg_lat,
        }
    }

    /// Projects to metres east and north of the origin.
    pub fn project(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (lon - self.origin_lon) * self.m_per_deg_lon,
            (lat - self.origin_lat) * self.m_per_deg_lat,
        )
    }

    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.origin_lon + x / self.m_per_deg_lon,
            self.origin_lat + y / self.m_per_deg_lat,
        )
    }

    pub fn distance_m(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let dx = (a.0 - b.0) * self.m_per_deg_lon;
        let dy = (a.1 - b.1) * self.m_per_deg_lat;
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("coordinate ({lon}, {lat}) lies outside the grid")]
    OutOfBounds { lon: f64, lat: f64 },
    #[error("place {0} is not a cell of this grid")]
    UnknownPlace(PlaceId),
    #[error("invalid grid: {0}")]
    Invalid(String),
}

/// A city's bounding box divided into square cells ("places").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Longitude of the lower-left corner.
    pub origin_lon: f64,
    /// Latitude of the lower-left corner.
    pub origin_lat: f64,
    pub cell_size_m: f64,
    pub ref_latitude: f64,
    pub n_cols: u32,
    pub n_rows: u32,
}

impl GridSpec {
    /// Grid whose projection reference is its own lower-left latitude.
    pub fn new(origin_lon: f64, origin_lat: f64, cell_size_m: f64, n_cols: u32, n_rows: u32) -> Self {
        GridSpec {
            origin_lon,
            origin_lat,
            cell_size_m,
            ref_latitude: origin_lat,
            n_cols,
            n_rows,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.cell_size_m > 0.0 && self.cell_size_m.is_finite()) {
            return Err(GridError::Invalid(format!(
                "cell_size_m must be positive, got {}",
                self.cell_size_m
            )));
        }
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(GridError::Invalid("grid has no cells".into()));
        }
        if (self.n_cols as u64) * (self.n_rows as u64) > u32::MAX as u64 {
            return Err(GridError::Invalid("grid too large".into()));
        }
        Ok(())
    }

    pub fn projection(&self) -> LocalProjection {
        LocalProjection::new(self.origin_lon, self.origin_lat, self.ref_latitude)
    }

    pub fn n_cells(&self) -> u32 {
        self.n_cols * self.n_rows
    }

    pub fn width_m(&self) -> f64 {
        self.n_cols as f64 * self.cell_size_m
    }

    pub fn height_m(&self) -> f64 {
        self.n_rows as f64 * self.cell_size_m
    }

    pub fn place_id(&self, col: u32, row: u32) -> PlaceId {
        PlaceId(row * self.n_cols + col)
    }

    pub fn col_row(&self, place: PlaceId) -> Result<(u32, u32), GridError> {
        if place.0 >= self.n_cells() {
            return Err(GridError::UnknownPlace(place));
        }
        Ok((place.0 % self.n_cols, place.0 / self.n_cols))
    }

    /// Cell containing a projected point; the lower and left edges belong to
    /// the cell, the upper and right edges to its neighbours.
    pub fn cell_of_xy(&self, x: f64, y: f64) -> Option<PlaceId> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let col = (x / self.cell_size_m).floor();
        let row = (y / self.cell_size_m).floor();
        if col >= self.n_cols as f64 || row >= self.n_rows as f64 {
            return None;
        }
        Some(self.place_id(col as u32, row as u32))
    }

    pub fn assign_cell(&self, lon: f64, lat: f64) -> Result<PlaceId, GridError> {
        let (x, y) = self.projection().project(lon, lat);
        self.cell_of_xy(x, y)
            .ok_or(GridError::OutOfBounds { lon, lat })
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        self.assign_cell(lon, lat).is_ok()
    }

    /// Projected centre of a cell in metres.
    pub fn cell_center_xy(&self, place: PlaceId) -> Result<(f64, f64), GridError> {
        let (col, row) = self.col_row(place)?;
        Ok((
            (col as f64 + 0.5) * self.cell_size_m,
            (row as f64 + 0.5) * self.cell_size_m,
        ))
    }

    pub fn cell_center(&self, place: PlaceId) -> Result<(f64, f64), GridError> {
        let (x, y) = self.cell_center_xy(place)?;
        Ok(self.projection().unproject(x, y))
    }

    /// Cell corners as (lon, lat), counter-clockwise from lower-left, closed.
    pub fn cell_polygon(&self, place: PlaceId) -> Result<[(f64, f64); 5], GridError> {
        let (col, row) = self.col_row(place)?;
        let proj = self.projection();
        let s = self.cell_size_m;
        let (x0, y0) = (col as f64 * s, row as f64 * s);
        let ll = proj.unproject(x0, y0);
        Ok([
            ll,
            proj.unproject(x0 + s, y0),
            proj.unproject(x0 + s, y0 + s),
            proj.unproject(x0, y0 + s),
            ll,
        ])
    }
}

/// Convenience for callers that only hold a free function signature.
pub fn assign_grid_cell(lon: f64, lat: f64, grid: &GridSpec) -> Result<PlaceId, GridError> {
    grid.assign_cell(lon, lat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(130.6, 32.7, 1000.0, 20, 15)
    }

    #[test]
    fn origin_is_cell_zero() {
        let g = grid();
        assert_eq!(g.assign_cell(130.6, 32.7).unwrap(), PlaceId(0));
        assert_eq!(g.col_row(PlaceId(0)).unwrap(), (0, 0));
    }

    #[test]
    fn offset_point_lands_in_expected_cell() {
        // Oracle: metres per degree computed independently from the sphere.
        let g = grid();
        let m_per_deg_lat = 2.0 * std::f64::consts::PI * EARTH_RADIUS_M / 360.0;
        let m_per_deg_lon = m_per_deg_lat * (32.7f64).to_radians().cos();
        let lon = 130.6 + 1500.0 / m_per_deg_lon;
        let lat = 32.7 + 500.0 / m_per_deg_lat;
        let place = g.assign_cell(lon, lat).unwrap();
        assert_eq!(g.col_row(place).unwrap(), (1, 0));
    }

    #[test]
    fn west_of_origin_is_out_of_bounds() {
        let g = grid();
        assert!(matches!(
            g.assign_cell(130.59, 32.71),
            Err(GridError::OutOfBounds { .. })
        ));
        assert!(g.assign_cell(130.61, 32.69).is_err());
    }

    #[test]
    fn invalid_grids_rejected() {
        let mut g = grid();
        g.cell_size_m = 0.0;
        assert!(g.validate().is_err());
        let mut g = grid();
        g.n_rows = 0;
        assert!(g.validate().is_err());
        assert!(grid().validate().is_ok());
    }

    #[test]
    fn centers_round_trip() {
        let g = grid();
        for p in 0..g.n_cells() {
            let (lon, lat) = g.cell_center(PlaceId(p)).unwrap();
            assert_eq!(g.assign_cell(lon, lat).unwrap(), PlaceId(p));
        }
    }

    proptest! {
        // Each in-bounds point belongs to exactly one cell: the cell reported
        // by assign_cell, and no other cell's rectangle contains it.
        #[test]
        fn cells_partition_the_box(fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
            let g = grid();
            let x = fx * g.width_m();
            let y = fy * g.height_m();
            let place = g.cell_of_xy(x, y).unwrap();
            let mut owners = 0;
            for p in 0..g.n_cells() {
                let (col, row) = g.col_row(PlaceId(p)).unwrap();
                let (x0, y0) = (col as f64 * 1000.0, row as f64 * 1000.0);
                if x >= x0 && x < x0 + 1000.0 && y >= y0 && y < y0 + 1000.0 {
                    owners += 1;
                    prop_assert_eq!(PlaceId(p), place);
                }
            }
            prop_assert_eq!(owners, 1);
        }

        #[test]
        fn projection_round_trips(x in -20_000.0f64..20_000.0, y in -20_000.0f64..20_000.0) {
            let proj = grid().projection();
            let (lon, lat) = proj.unproject(x, y);
            let (x2, y2) = proj.project(lon, lat);
            prop_assert!((x - x2).abs() < 1e-6 && (y - y2).abs() < 1e-6);
        }
    }
}
