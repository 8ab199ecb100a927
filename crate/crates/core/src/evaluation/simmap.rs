use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::embedding::EmbeddingMatrix;
use crate::geo::GridSpec;
use crate::types::PlaceId;

use super::metrics::cos_sim;
use super::EvaluationError;

/// Share of target places flagged as most similar.
pub const TOP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityEntry {
    pub place: PlaceId,
    pub cos_sim: f64,
    pub top5pct: bool,
}

/// Cosine similarity of one source place against every target place.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMap {
    pub source_place: PlaceId,
    pub source_city: String,
    pub target_city: String,
    /// Similarity of the last flagged place.
    pub threshold: f64,
    /// In the target embedding's column order.
    pub entries: Vec<SimilarityEntry>,
}

/// Flags the `⌈0.05 n⌉` most similar target places (ties to the smaller
/// PlaceId).
pub fn similarity_map(
    source_place: PlaceId,
    x_source: &EmbeddingMatrix,
    x_target: &EmbeddingMatrix,
) -> Result<SimilarityMap, EvaluationError> {
    let src = x_source.column(source_place).ok_or_else(|| EvaluationError::MissingPlace {
        city: x_source.city_id().clone(),
        place: source_place,
    })?;
    let mut entries: Vec<SimilarityEntry> = x_target
        .place_ids()
        .iter()
        .zip(x_target.values().columns())
        .map(|(&place, col)| {
            Ok(SimilarityEntry {
                place,
                cos_sim: cos_sim(src, col)?,
                top5pct: false,
            })
        })
        .collect::<Result<_, EvaluationError>>()?;
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        entries[b]
            .cos_sim
            .total_cmp(&entries[a].cos_sim)
            .then(entries[a].place.cmp(&entries[b].place))
    });
    let k = (TOP_FRACTION * entries.len() as f64).ceil() as usize;
    for &i in &order[..k] {
        entries[i].top5pct = true;
    }
    let threshold = order[..k].last().map_or(f64::NAN, |&i| entries[i].cos_sim);
    Ok(SimilarityMap {
        source_place,
        source_city: x_source.city_id().to_string(),
        target_city: x_target.city_id().to_string(),
        threshold,
        entries,
    })
}

impl SimilarityMap {
    pub fn n_flagged(&self) -> usize {
        self.entries.iter().filter(|e| e.top5pct).count()
    }

    /// Target cells as polygons with `cos_sim` and `top5pct` properties.
    pub fn write_geojson(&self, grid: &GridSpec, path: &Path) -> Result<(), EvaluationError> {
        let features = self
            .entries
            .iter()
            .map(|e| {
                let ring: Vec<[f64; 2]> = grid.cell_polygon(e.place)?.iter().map(|&(lon, lat)| [lon, lat]).collect();
                Ok(json!({
                    "type": "Feature",
                    "geometry": {"type": "Polygon", "coordinates": [ring]},
                    "properties": {
                        "place_id": e.place.0,
                        "cos_sim": e.cos_sim,
                        "top5pct": e.top5pct,
                    },
                }))
            })
            .collect::<Result<Vec<_>, EvaluationError>>()?;
        let doc = json!({
            "type": "FeatureCollection",
            "properties": {
                "source_city": self.source_city,
                "source_place": self.source_place.0,
                "target_city": self.target_city,
                "threshold": self.threshold,
            },
            "features": features,
        });
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &doc)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    /// `place_id,col,row,center_lon,center_lat,cos_sim,top5pct`
    pub fn write_csv(&self, grid: &GridSpec, path: &Path) -> Result<(), EvaluationError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["place_id", "col", "row", "center_lon", "center_lat", "cos_sim", "top5pct"])?;
        for e in &self.entries {
            let (col, row) = grid.col_row(e.place)?;
            let (lon, lat) = grid.cell_center(e.place)?;
            w.write_record([
                e.place.to_string(),
                col.to_string(),
                row.to_string(),
                lon.to_string(),
                lat.to_string(),
                e.cos_sim.to_string(),
                e.top5pct.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
