use std::collections::HashSet;
use std::fmt;

use ndarray::ArrayView1;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::types::{CityId, PlaceId};

use super::EvaluationError;

pub fn norm_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64, EvaluationError> {
    if a.len() != b.len() {
        return Err(EvaluationError::Dimension(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

pub fn cos_sim(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64, EvaluationError> {
    if a.len() != b.len() {
        return Err(EvaluationError::Dimension(a.len(), b.len()));
    }
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Err(EvaluationError::ZeroVector);
    }
    Ok((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Metric {
    /// Average mutual norm distance; lower means closer.
    Amnd,
    /// Average mutual cosine similarity; higher means closer.
    Amcs,
}

impl Metric {
    pub fn pair(self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64, EvaluationError> {
        match self {
            Metric::Amnd => norm_dist(a, b),
            Metric::Amcs => cos_sim(a, b),
        }
    }

    /// Whether `value` beats the baseline by more than two standard
    /// deviations in this metric's favorable direction.
    pub fn significant(self, value: f64, mean: f64, std: f64) -> bool {
        match self {
            Metric::Amnd => value < mean - 2.0 * std,
            Metric::Amcs => value > mean + 2.0 * std,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Amnd => "AMND",
            Metric::Amcs => "AMCS",
        })
    }
}

/// Places of one city sharing a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceSet {
    pub city_id: CityId,
    pub label: String,
    pub places: Vec<PlaceId>,
}

impl PlaceSet {
    pub fn new(city_id: CityId, label: impl Into<String>, places: Vec<PlaceId>) -> Result<Self, EvaluationError> {
        let mut seen = HashSet::with_capacity(places.len());
        for &p in &places {
            if !seen.insert(p) {
                return Err(EvaluationError::DuplicatePlace(p));
            }
        }
        Ok(PlaceSet {
            city_id,
            label: label.into(),
            places,
        })
    }

    pub fn len(&self) -> usize {
        self.places.len()
    }

    pub fn is_empty(&self) -> bool {
        self.places.is_empty()
    }
}

fn columns<'a>(
    places: &[PlaceId],
    x: &'a EmbeddingMatrix,
) -> Result<Vec<(PlaceId, ArrayView1<'a, f64>)>, EvaluationError> {
    places
        .iter()
        .map(|&p| {
            x.column(p).map(|c| (p, c)).ok_or_else(|| EvaluationError::MissingPlace {
                city: x.city_id().clone(),
                place: p,
            })
        })
        .collect()
}

/// Mean of `metric` over the unordered pairs `{i, j}` with `i` from the
/// first set, `j` from the second and `i ≠ j`, each pair counted once. A
/// place is identified by its embedding's city and its PlaceId, so sets
/// from different embeddings never share members.
pub fn mutual_metric(
    metric: Metric,
    set_i: &[PlaceId],
    x_i: &EmbeddingMatrix,
    set_j: &[PlaceId],
    x_j: &EmbeddingMatrix,
) -> Result<f64, EvaluationError> {
    if x_i.dim() != x_j.dim() {
        return Err(EvaluationError::Dimension(x_i.dim(), x_j.dim()));
    }
    let a = columns(set_i, x_i)?;
    let b = columns(set_j, x_j)?;
    let same_space = x_i.city_id() == x_j.city_id();
    let (in_i, in_j): (HashSet<PlaceId>, HashSet<PlaceId>) = if same_space {
        (set_i.iter().copied().collect(), set_j.iter().copied().collect())
    } else {
        Default::default()
    };
    let mut sum = CompensatedSum::default();
    let mut pairs = 0u64;
    for &(p, u) in &a {
        for &(q, v) in &b {
            if same_space {
                if p == q {
                    continue;
                }
                // {p, q} also appears as (q, p) when both places sit in both
                // sets; keep only the ordered copy.
                let both = in_j.contains(&p) && in_i.contains(&q);
                if both && p > q {
                    continue;
                }
            }
            sum.add(metric.pair(u, v)?);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(EvaluationError::NoPairs);
    }
    Ok(sum.total() / pairs as f64)
}

/// Neumaier summation; cosine terms of mixed sign can cancel heavily.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn amnd(i: &PlaceSet, j: &PlaceSet, x_i: &EmbeddingMatrix, x_j: &EmbeddingMatrix) -> Result<f64, EvaluationError> {
    mutual_metric(Metric::Amnd, &i.places, x_i, &j.places, x_j)
}

pub fn amcs(i: &PlaceSet, j: &PlaceSet, x_i: &EmbeddingMatrix, x_j: &EmbeddingMatrix) -> Result<f64, EvaluationError> {
    mutual_metric(Metric::Amcs, &i.places, x_i, &j.places, x_j)
}

/// Mean and sample standard deviation of `metric` between `source` and
/// `iterations` independent draws of `|source|` places from `pool` without
/// replacement. The caller keeps target-label places out of the pool.
pub fn random_baseline(
    metric: Metric,
    source: &[PlaceId],
    x_source: &EmbeddingMatrix,
    pool: &[PlaceId],
    x_pool: &EmbeddingMatrix,
    iterations: usize,
    seed: u64,
) -> Result<(f64, f64), EvaluationError> {
    if pool.len() < source.len() {
        return Err(EvaluationError::InsufficientPool {
            needed: source.len(),
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let draw: Vec<PlaceId> = sample(&mut rng, pool.len(), source.len())
            .iter()
            .map(|k| pool[k])
            .collect();
        values.push(mutual_metric(metric, source, x_source, &draw, x_pool)?);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((mean, std))
}
