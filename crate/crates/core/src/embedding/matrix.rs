use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::types::{CityId, PlaceId};

use super::EmbeddingError;

/// Place representations of one city, stored column-wise (`d x n`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    city_id: CityId,
    /// Shared-space tag for matrices cut from one jointly trained model.
    space: Option<String>,
    place_ids: Vec<PlaceId>,
    values: Array2<f64>,
    index: HashMap<PlaceId, usize>,
}

impl EmbeddingMatrix {
    pub fn new(city_id: CityId, place_ids: Vec<PlaceId>, values: Array2<f64>) -> Result<Self, EmbeddingError> {
        if values.ncols() != place_ids.len() {
            return Err(EmbeddingError::Shape(format!(
                "{} columns for {} places",
                values.ncols(),
                place_ids.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(format!("embedding for {city_id}")));
        }
        let mut index = HashMap::with_capacity(place_ids.len());
        for (k, &p) in place_ids.iter().enumerate() {
            if index.insert(p, k).is_some() {
                return Err(EmbeddingError::Shape(format!("duplicate place {p}")));
            }
        }
        Ok(EmbeddingMatrix {
            city_id,
            space: None,
            place_ids,
            values,
            index,
        })
    }

    pub fn with_space(mut self, space: impl Into<String>) -> Self {
        self.space = Some(space.into());
        self
    }

    pub fn city_id(&self) -> &CityId {
        &self.city_id
    }

    pub fn space(&self) -> Option<&str> {
        self.space.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_places(&self) -> usize {
        self.place_ids.len()
    }

    pub fn place_ids(&self) -> &[PlaceId] {
        &self.place_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn contains(&self, place: PlaceId) -> bool {
        self.index.contains_key(&place)
    }

    pub fn column_index(&self, place: PlaceId) -> Option<usize> {
        self.index.get(&place).copied()
    }

    pub fn column(&self, place: PlaceId) -> Option<ArrayView1<'_, f64>> {
        self.column_index(place).map(|k| self.values.column(k))
    }

    /// Same places with new values (for example after a linear map).
    pub fn with_values(&self, city_id: CityId, values: Array2<f64>) -> Result<Self, EmbeddingError> {
        let mut m = EmbeddingMatrix::new(city_id, self.place_ids.clone(), values)?;
        m.space = self.space.clone();
        Ok(m)
    }

    /// Copy with every column scaled to unit length (zero columns unchanged).
    pub fn normalized(&self) -> Self {
        let mut values = self.values.clone();
        for mut col in values.columns_mut() {
            let n = col.dot(&col).sqrt();
            if n > 0.0 {
                col /= n;
            }
        }
        EmbeddingMatrix {
            values,
            ..self.clone()
        }
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut out = BufWriter::new(File::create(path)?);
        write!(out, "#city={} d={} n={}", self.city_id, self.dim(), self.n_places())?;
        if let Some(space) = &self.space {
            write!(out, " space={space}")?;
        }
        writeln!(out)?;
        for (k, p) in self.place_ids.iter().enumerate() {
            write!(out, "{p}")?;
            for v in self.values.column(k) {
                // `{}` on f64 prints the shortest string that parses back to
                // the same bits.
                write!(out, "\t{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self, EmbeddingError> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let bad = |line: usize, message: String| EmbeddingError::Format { line, message };
        let fields = parse_header(&header).ok_or_else(|| bad(1, format!("bad header {header:?}")))?;
        let get = |k: &str| fields.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let city_id = get("city")
            .and_then(|c| CityId::new(c).ok())
            .ok_or_else(|| bad(1, "missing or invalid city".into()))?;
        let d: usize = get("d").and_then(|v| v.parse().ok()).ok_or_else(|| bad(1, "missing d".into()))?;
        let n: usize = get("n").and_then(|v| v.parse().ok()).ok_or_else(|| bad(1, "missing n".into()))?;
        let space = get("space").map(str::to_owned);

        let mut place_ids = Vec::with_capacity(n);
        let mut values = Array2::zeros((d, n));
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            if line.is_empty() {
                continue;
            }
            let k = place_ids.len();
            if k >= n {
                return Err(bad(lineno, format!("more than n={n} rows")));
            }
            let mut parts = line.split('\t');
            let place: PlaceId = parts
                .next()
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| bad(lineno, "bad place id".into()))?;
            let mut count = 0;
            for (r, v) in parts.enumerate() {
                if r >= d {
                    return Err(bad(lineno, format!("more than d={d} values")));
                }
                values[[r, k]] = v.parse().map_err(|_| bad(lineno, format!("bad value {v:?}")))?;
                count += 1;
            }
            if count != d {
                return Err(bad(lineno, format!("expected {d} values, found {count}")));
            }
            place_ids.push(place);
        }
        if place_ids.len() != n {
            return Err(bad(0, format!("expected {n} rows, found {}", place_ids.len())));
        }
        let mut m = EmbeddingMatrix::new(city_id, place_ids, values)?;
        m.space = space;
        Ok(m)
    }
}

fn parse_header(line: &str) -> Option<Vec<(String, String)>> {
    let body = line.strip_prefix('#')?;
    body.split_whitespace()
        .map(|kv| kv.split_once('=').map(|(k, v)| (k.to_owned(), v.to_owned())))
        .collect()
}
