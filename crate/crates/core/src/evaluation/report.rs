use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::seed::derive_seed;
use crate::trajectory::MobilityCorpus;
use crate::translation::{apply_translation, build_anchor_dictionary, procrustes_align, random_anchor_dictionary};
use crate::types::PlaceId;

use super::landuse::{LabelMapping, LanduseGrid};
use super::metrics::{mutual_metric, random_baseline, Metric, PlaceSet};
use super::EvaluationError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub labels: Vec<String>,
    pub label_categories: LabelMapping,
    /// Random draws per baseline.
    pub iterations: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            labels: ["business", "shopping", "residential", "farmland"].map(String::from).to_vec(),
            label_categories: LabelMapping::default(),
            iterations: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub metric: Metric,
    pub value: f64,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub iterations: usize,
    pub significant: bool,
    pub n_source: usize,
    pub n_target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Intra,
    Inter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub kind: ReportKind,
    pub source_city: String,
    pub target_city: String,
    pub seed: u64,
    pub entries: Vec<MetricReport>,
    /// Labels with fewer than two places on either side.
    pub skipped: Vec<String>,
}

impl ValidationReport {
    pub fn entry(&self, label: &str, metric: Metric) -> Option<&MetricReport> {
        self.entries.iter().find(|e| e.label == label && e.metric == metric)
    }
}

/// Embedded places whose dominant landuse maps to `label`.
pub fn label_set(
    x: &EmbeddingMatrix,
    landuse: &LanduseGrid,
    mapping: &LabelMapping,
    label: &str,
) -> Result<PlaceSet, EvaluationError> {
    let cats = mapping.categories(label)?;
    let places = x
        .place_ids()
        .iter()
        .copied()
        .filter(|&p| landuse.dominant(p).is_some_and(|c| cats.contains(&c)))
        .collect();
    PlaceSet::new(x.city_id().clone(), label, places)
}

/// Embedded places with landuse data whose dominant category is not one of
/// `label`'s.
fn baseline_pool(
    x: &EmbeddingMatrix,
    landuse: &LanduseGrid,
    mapping: &LabelMapping,
    label: &str,
) -> Result<Vec<PlaceId>, EvaluationError> {
    let cats = mapping.categories(label)?;
    Ok(x.place_ids()
        .iter()
        .copied()
        .filter(|&p| landuse.dominant(p).is_some_and(|c| !cats.contains(&c)))
        .collect())
}

const METRICS: [Metric; 2] = [Metric::Amnd, Metric::Amcs];

#[allow(clippy::too_many_arguments)]
fn compare(
    kind: &str,
    label: &str,
    source: &PlaceSet,
    x_source: &EmbeddingMatrix,
    target: &PlaceSet,
    x_target: &EmbeddingMatrix,
    pool: &[PlaceId],
    settings: &EvalSettings,
    out: &mut Vec<MetricReport>,
) -> Result<(), EvaluationError> {
    for metric in METRICS {
        let value = mutual_metric(metric, &source.places, x_source, &target.places, x_target)?;
        let seed = derive_seed(
            settings.seed,
            &format!("{kind}/{}/{}/{label}/{metric}", x_source.city_id(), x_target.city_id()),
        );
        let (mean, std) = random_baseline(metric, &source.places, x_source, pool, x_target, settings.iterations, seed)?;
        out.push(MetricReport {
            label: label.to_owned(),
            metric,
            value,
            baseline_mean: mean,
            baseline_std: std,
            iterations: settings.iterations,
            significant: metric.significant(value, mean, std),
            n_source: source.len(),
            n_target: target.len(),
        });
    }
    Ok(())
}

/// Same-label AMND and AMCS within one city, each against the same label
/// set paired with random non-label places of that city.
pub fn intra_city_report(
    x: &EmbeddingMatrix,
    landuse: &LanduseGrid,
    settings: &EvalSettings,
) -> Result<ValidationReport, EvaluationError> {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for label in &settings.labels {
        let set = label_set(x, landuse, &settings.label_categories, label)?;
        if set.len() < 2 {
            log::warn!("{}: label {label} has {} places; skipped", x.city_id(), set.len());
            skipped.push(label.clone());
            continue;
        }
        let pool = baseline_pool(x, landuse, &settings.label_categories, label)?;
        compare("intra", label, &set, x, &set, x, &pool, settings, &mut entries)?;
    }
    Ok(ValidationReport {
        kind: ReportKind::Intra,
        source_city: x.city_id().to_string(),
        target_city: x.city_id().to_string(),
        seed: settings.seed,
        entries,
        skipped,
    })
}

/// Same-label AMND and AMCS between a (usually translated) source city and a
/// target city; baselines pair the source set with random non-label places
/// of the target city.
pub fn inter_city_report(
    x_source: &EmbeddingMatrix,
    x_target: &EmbeddingMatrix,
    landuse_source: &LanduseGrid,
    landuse_target: &LanduseGrid,
    settings: &EvalSettings,
) -> Result<ValidationReport, EvaluationError> {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for label in &settings.labels {
        let src = label_set(x_source, landuse_source, &settings.label_categories, label)?;
        let tgt = label_set(x_target, landuse_target, &settings.label_categories, label)?;
        if src.len() < 2 || tgt.len() < 2 {
            log::warn!(
                "label {label}: {} source and {} target places; skipped",
                src.len(),
                tgt.len()
            );
            skipped.push(label.clone());
            continue;
        }
        let pool = baseline_pool(x_target, landuse_target, &settings.label_categories, label)?;
        compare("inter", label, &src, x_source, &tgt, x_target, &pool, settings, &mut entries)?;
    }
    Ok(ValidationReport {
        kind: ReportKind::Inter,
        source_city: x_source.city_id().to_string(),
        target_city: x_target.city_id().to_string(),
        seed: settings.seed,
        entries,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub n_anchors: usize,
    /// Cross-city AMCS after Procrustes over popularity-paired anchors.
    pub ranked_amcs: f64,
    /// The same with randomly paired anchors.
    pub random_amcs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub label: String,
    pub source_city: String,
    pub target_city: String,
    pub points: Vec<SensitivityPoint>,
}

/// Cross-city AMCS of `label` as a function of the anchor count.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_sweep(
    corpus_phi: &MobilityCorpus,
    corpus_psi: &MobilityCorpus,
    x_phi: &EmbeddingMatrix,
    x_psi: &EmbeddingMatrix,
    landuse_phi: &LanduseGrid,
    landuse_psi: &LanduseGrid,
    label: &str,
    n_values: &[usize],
    settings: &EvalSettings,
) -> Result<SensitivityCurve, EvaluationError> {
    let src = label_set(x_phi, landuse_phi, &settings.label_categories, label)?;
    let tgt = label_set(x_psi, landuse_psi, &settings.label_categories, label)?;
    let amcs_after = |anchors| -> Result<f64, EvaluationError> {
        let r = procrustes_align(x_phi, x_psi, &anchors)?;
        let translated = apply_translation(&r, x_phi)?;
        mutual_metric(Metric::Amcs, &src.places, &translated, &tgt.places, x_psi)
    };
    let mut points = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let ranked = build_anchor_dictionary(corpus_phi, corpus_psi, n)?;
        let seed = derive_seed(settings.seed, &format!("sweep/{n}"));
        let random = random_anchor_dictionary(corpus_phi, corpus_psi, n, seed)?;
        points.push(SensitivityPoint {
            n_anchors: n,
            ranked_amcs: amcs_after(ranked)?,
            random_amcs: amcs_after(random)?,
        });
    }
    Ok(SensitivityCurve {
        label: label.to_owned(),
        source_city: x_phi.city_id().to_string(),
        target_city: x_psi.city_id().to_string(),
        points,
    })
}
