use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::types::CityId;

use super::TranslationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Procrustes,
    Adversarial,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Procrustes => "procrustes",
            Method::Adversarial => "adversarial",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "procrustes" => Ok(Method::Procrustes),
            "adversarial" => Ok(Method::Adversarial),
            other => Err(format!("unknown translation method {other:?}")),
        }
    }
}

/// A `d x d` map taking source-city columns into the target city's space.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationMatrix {
    pub source_city: CityId,
    pub target_city: CityId,
    pub method: Method,
    pub r: Array2<f64>,
}

impl TranslationMatrix {
    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.r)
    }

    pub fn write_tsv(&self, path: &Path) -> Result<(), TranslationError> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(
            out,
            "#source={} target={} d={} method={}",
            self.source_city,
            self.target_city,
            self.dim(),
            self.method
        )?;
        for row in self.r.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join("\t"))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self, TranslationError> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let bad = |line: usize, message: String| TranslationError::Format { line, message };
        let header = lines.next().transpose()?.unwrap_or_default();
        let fields: Vec<(&str, &str)> = header
            .strip_prefix('#')
            .map(|h| h.split_whitespace().filter_map(|kv| kv.split_once('=')).collect())
            .unwrap_or_default();
        let get = |k: &str| fields.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
        let city = |k: &str| {
            get(k)
                .and_then(|c| CityId::new(c).ok())
                .ok_or_else(|| bad(1, format!("missing or invalid {k}")))
        };
        let source_city = city("source")?;
        let target_city = city("target")?;
        let d: usize = get("d").and_then(|v| v.parse().ok()).ok_or_else(|| bad(1, "missing d".into()))?;
        let method: Method = get("method")
            .ok_or_else(|| bad(1, "missing method".into()))?
            .parse()
            .map_err(|m| bad(1, m))?;

        let mut r = Array2::zeros((d, d));
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            if rows == d {
                return Err(bad(i + 2, format!("more than d={d} rows")));
            }
            let values: Vec<f64> = line
                .split('\t')
                .map(|v| v.parse().map_err(|_| bad(i + 2, format!("bad value {v:?}"))))
                .collect::<Result<_, _>>()?;
            if values.len() != d {
                return Err(bad(i + 2, format!("expected {d} values, found {}", values.len())));
            }
            for (j, v) in values.into_iter().enumerate() {
                r[[rows, j]] = v;
            }
            rows += 1;
        }
        if rows != d {
            return Err(bad(0, format!("expected {d} rows, found {rows}")));
        }
        Ok(TranslationMatrix {
            source_city,
            target_city,
            method,
            r,
        })
    }
}

pub(crate) fn orthogonality_error(r: &Array2<f64>) -> f64 {
    let mut g = r.t().dot(r);
    for k in 0..g.nrows() {
        g[[k, k]] -= 1.0;
    }
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Columns `R x_i` with the same place ids, tagged as `source->target`.
pub fn apply_translation(r: &TranslationMatrix, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix, TranslationError> {
    if x.city_id() != &r.source_city {
        return Err(TranslationError::CityMismatch {
            expected: r.source_city.clone(),
            found: x.city_id().clone(),
        });
    }
    if x.dim() != r.dim() {
        return Err(TranslationError::Dimension(format!(
            "map is {0}x{0}, embedding has d={1}",
            r.dim(),
            x.dim()
        )));
    }
    let values = r.r.dot(x.values());
    Ok(x.with_values(x.city_id().translated_into(&r.target_city), values)?)
}
