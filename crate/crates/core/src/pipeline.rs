//! File-level pipeline steps shared by the command-line tool and the
//! end-to-end tests. Every step reads its inputs from disk, writes its
//! outputs into a directory and returns a small summary.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, PipelineConfig};
use crate::embedding::{
    export_embeddings, save_checkpoint, train_joint_moblstm, train_moblstm, EmbeddingError, EmbeddingMatrix,
    TrainedModel,
};
use crate::evaluation::{
    aggregate_landuse, inter_city_report, intra_city_report, parse_landuse_csv, sensitivity_sweep, similarity_map,
    EvaluationError, LanduseGrid, SensitivityCurve, ValidationReport,
};
use crate::geo::GridSpec;
use crate::synthcity::{generate_city_pair, CitySpec, SynthError};
use crate::trajectory::{extract_corpus, parse_gps_records, read_corpus, write_corpus, MobilityCorpus, TrajectoryError};
use crate::translation::{
    adversarial_align, apply_translation, build_anchor_dictionary, procrustes_align, procrustes_objective,
    Method, TranslationError, TranslationMatrix,
};
use crate::types::{CityId, PlaceId};

pub const CORPUS_TSV: &str = "corpus.tsv";
pub const CORPUS_JSON: &str = "corpus.json";
pub const EMBEDDING_TSV: &str = "embedding.tsv";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAINING_JSON: &str = "training.json";
pub const TRANSLATION_TSV: &str = "translation.tsv";
pub const ANCHORS_TSV: &str = "anchors.tsv";
pub const ALIGN_JSON: &str = "align.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Data(String),
}

impl PipelineError {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PipelineError::Embedding(EmbeddingError::NonFinite(_))
                | PipelineError::Translation(TranslationError::Diverged { .. })
                | PipelineError::Translation(TranslationError::Embedding(EmbeddingError::NonFinite(_)))
                | PipelineError::Evaluation(EvaluationError::ZeroVector)
        )
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| PipelineError::Json {
        path: path.to_owned(),
        source,
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| PipelineError::Json {
        path: path.to_owned(),
        source,
    })?;
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn load_grid(path: &Path) -> Result<GridSpec, PipelineError> {
    let grid: GridSpec = read_json(path)?;
    grid.validate().map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    Ok(grid)
}

pub fn load_landuse(path: &Path, grid: &GridSpec) -> Result<LanduseGrid, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let cells = parse_landuse_csv(BufReader::new(file))?;
    Ok(aggregate_landuse(&cells, grid)?)
}

pub fn load_corpus(dir: &Path) -> Result<MobilityCorpus, PipelineError> {
    Ok(read_corpus(&dir.join(CORPUS_TSV), &dir.join(CORPUS_JSON))?)
}

pub fn load_embedding(path: &Path) -> Result<EmbeddingMatrix, PipelineError> {
    Ok(EmbeddingMatrix::read_tsv(path)?)
}

/// Writes both cities of a synthetic pair into `out/<name>/`.
pub fn synth_pair(
    spec_phi: &CitySpec,
    spec_psi: &CitySpec,
    behavior_seed: u64,
    out: &Path,
) -> Result<[PathBuf; 2], PipelineError> {
    let (phi, psi) = generate_city_pair(spec_phi, spec_psi, behavior_seed)?;
    let dirs = [out.join(&spec_phi.name), out.join(&spec_psi.name)];
    phi.write_dir(&dirs[0])?;
    psi.write_dir(&dirs[1])?;
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub city_id: CityId,
    pub n_records: usize,
    pub n_rejected_rows: usize,
    pub n_users: usize,
    pub n_staypoints: usize,
    pub n_places: usize,
}

/// GPS CSV to corpus files in `out`.
pub fn run_extract(
    gps: &Path,
    grid: &GridSpec,
    city_id: CityId,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<ExtractSummary, PipelineError> {
    let file = File::open(gps).map_err(io_err(gps))?;
    let parsed = parse_gps_records(BufReader::new(file))?;
    if !parsed.errors.is_empty() {
        log::warn!("{}: {} rows rejected", gps.display(), parsed.errors.len());
    }
    let corpus = extract_corpus(&parsed, &cfg.extract, city_id.clone(), grid.clone());
    create_dir(out)?;
    write_corpus(&corpus, &out.join(CORPUS_TSV), &out.join(CORPUS_JSON))?;
    let summary = ExtractSummary {
        city_id,
        n_records: parsed.n_records(),
        n_rejected_rows: parsed.errors.len(),
        n_users: corpus.sequences.len(),
        n_staypoints: corpus.n_staypoints(),
        n_places: corpus.n_places(),
    };
    log::info!(
        "{}: {} users, {} staypoints, {} places",
        summary.city_id,
        summary.n_users,
        summary.n_staypoints,
        summary.n_places
    );
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub cities: Vec<CityId>,
    pub place_dim: usize,
    pub vocab_size: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub train_loss_history: Vec<f64>,
    pub validation_loss_history: Vec<f64>,
}

impl TrainingSummary {
    fn of(model: &TrainedModel) -> Self {
        TrainingSummary {
            cities: model.vocab.slices().iter().map(|s| s.city.clone()).collect(),
            place_dim: model.config.place_dim,
            vocab_size: model.vocab.len(),
            seed: model.config.seed,
            best_epoch: model.best_epoch,
            train_loss_history: model.train_loss_history.clone(),
            validation_loss_history: model.validation_loss_history.clone(),
        }
    }
}

fn log_training(model: &TrainedModel) {
    for (epoch, (train, val)) in model
        .train_loss_history
        .iter()
        .zip(&model.validation_loss_history)
        .enumerate()
    {
        log::info!("epoch {epoch}: train loss {train:.5}, validation loss {val:.5}");
    }
    log::info!("best epoch {}", model.best_epoch);
}

/// Trains on one corpus; writes the embedding, checkpoint and loss record.
pub fn run_train(corpus_dir: &Path, cfg: &PipelineConfig, out: &Path) -> Result<TrainingSummary, PipelineError> {
    let corpus = load_corpus(corpus_dir)?;
    let model = train_moblstm(&corpus, &cfg.model_for(corpus.city_id.as_str()))?;
    log_training(&model);
    create_dir(out)?;
    export_embeddings(&model, &corpus.city_id)?.write_tsv(&out.join(EMBEDDING_TSV))?;
    save_checkpoint(&model, &out.join(CHECKPOINT))?;
    let summary = TrainingSummary::of(&model);
    write_json(&summary, &out.join(TRAINING_JSON))?;
    Ok(summary)
}

/// Joint training; writes `<city>.tsv` for both cities.
pub fn run_train_joint(
    corpus_phi: &Path,
    corpus_psi: &Path,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<TrainingSummary, PipelineError> {
    let phi = load_corpus(corpus_phi)?;
    let psi = load_corpus(corpus_psi)?;
    let run = format!("joint/{}/{}", phi.city_id, psi.city_id);
    let (model, x_phi, x_psi) = train_joint_moblstm(&phi, &psi, &cfg.model_for(&run))?;
    log_training(&model);
    create_dir(out)?;
    x_phi.write_tsv(&out.join(format!("{}.tsv", phi.city_id)))?;
    x_psi.write_tsv(&out.join(format!("{}.tsv", psi.city_id)))?;
    save_checkpoint(&model, &out.join(CHECKPOINT))?;
    let summary = TrainingSummary::of(&model);
    write_json(&summary, &out.join(TRAINING_JSON))?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignSummary {
    pub method: Method,
    pub source_city: CityId,
    pub target_city: CityId,
    pub normalized: bool,
    pub orthogonality_error: f64,
    /// Distance of R from the identity.
    pub identity_distance: f64,
    pub n_anchors: Option<usize>,
    /// Squared Frobenius misfit over the anchors.
    pub anchor_objective: Option<f64>,
    pub heldout_accuracy: Option<f64>,
    pub max_orthogonality_error: Option<f64>,
}

pub struct AlignInputs<'a> {
    pub source: &'a Path,
    pub target: &'a Path,
    /// Corpus directories; Procrustes ranks anchors by their visit counts.
    pub corpora: Option<(&'a Path, &'a Path)>,
}

/// Fits the translation from the source to the target embedding.
pub fn run_align(inputs: &AlignInputs<'_>, cfg: &PipelineConfig, out: &Path) -> Result<AlignSummary, PipelineError> {
    let mut x_src = load_embedding(inputs.source)?;
    let mut x_tgt = load_embedding(inputs.target)?;
    let normalize = cfg.translation.normalize;
    if normalize {
        x_src = x_src.normalized();
        x_tgt = x_tgt.normalized();
    }
    create_dir(out)?;
    let mut summary = AlignSummary {
        method: cfg.translation.method,
        source_city: x_src.city_id().clone(),
        target_city: x_tgt.city_id().clone(),
        normalized: normalize,
        orthogonality_error: 0.0,
        identity_distance: 0.0,
        n_anchors: None,
        anchor_objective: None,
        heldout_accuracy: None,
        max_orthogonality_error: None,
    };
    let matrix = match cfg.translation.method {
        Method::Procrustes => {
            let (c_src, c_tgt) = inputs
                .corpora
                .ok_or_else(|| PipelineError::Data("procrustes alignment needs both corpora".into()))?;
            let (c_src, c_tgt) = (load_corpus(c_src)?, load_corpus(c_tgt)?);
            check_city(&c_src.city_id, x_src.city_id())?;
            check_city(&c_tgt.city_id, x_tgt.city_id())?;
            let anchors = build_anchor_dictionary(&c_src, &c_tgt, cfg.translation.n_anchors)?;
            anchors.write_tsv(&out.join(ANCHORS_TSV))?;
            let matrix = procrustes_align(&x_src, &x_tgt, &anchors)?;
            summary.n_anchors = Some(anchors.len());
            summary.anchor_objective = Some(anchor_objective(&matrix, &x_src, &x_tgt, &anchors.pairs)?);
            matrix
        }
        Method::Adversarial => {
            let run = format!("{}/{}", x_src.city_id(), x_tgt.city_id());
            let outcome = adversarial_align(&x_src, &x_tgt, &cfg.adversarial_for(&run))?;
            summary.heldout_accuracy = Some(outcome.heldout_accuracy);
            summary.max_orthogonality_error = Some(outcome.max_orthogonality_error);
            outcome.matrix
        }
    };
    summary.orthogonality_error = matrix.orthogonality_error();
    let d = matrix.dim();
    summary.identity_distance = (&matrix.r - &ndarray::Array2::<f64>::eye(d)).iter().map(|v| v * v).sum::<f64>().sqrt();
    log::info!(
        "{} -> {}: {} fit, ‖R − I‖_F = {:.3e}, ‖RᵀR − I‖_F = {:.3e}",
        summary.source_city,
        summary.target_city,
        summary.method,
        summary.identity_distance,
        summary.orthogonality_error
    );
    matrix.write_tsv(&out.join(TRANSLATION_TSV))?;
    write_json(&summary, &out.join(ALIGN_JSON))?;
    Ok(summary)
}

fn check_city(corpus: &CityId, embedding: &CityId) -> Result<(), PipelineError> {
    if corpus != embedding {
        return Err(PipelineError::Data(format!(
            "corpus of {corpus} does not match embedding of {embedding}"
        )));
    }
    Ok(())
}

fn anchor_objective(
    matrix: &TranslationMatrix,
    x_src: &EmbeddingMatrix,
    x_tgt: &EmbeddingMatrix,
    pairs: &[(PlaceId, PlaceId)],
) -> Result<f64, PipelineError> {
    let gather = |x: &EmbeddingMatrix, ids: Vec<PlaceId>| {
        let cols: Vec<_> = ids.iter().filter_map(|&p| x.column(p)).collect();
        ndarray::stack(ndarray::Axis(1), &cols).map_err(|e| PipelineError::Data(e.to_string()))
    };
    let b = gather(x_src, pairs.iter().map(|p| p.0).collect())?;
    let a = gather(x_tgt, pairs.iter().map(|p| p.1).collect())?;
    Ok(procrustes_objective(matrix.r.view(), b.view(), a.view()))
}

/// Applies a stored translation to an embedding file.
pub fn run_translate(
    matrix: &Path,
    embedding: &Path,
    normalize: bool,
    out_file: &Path,
) -> Result<EmbeddingMatrix, PipelineError> {
    let matrix = TranslationMatrix::read_tsv(matrix)?;
    let mut x = load_embedding(embedding)?;
    if normalize {
        x = x.normalized();
    }
    let translated = apply_translation(&matrix, &x)?;
    if let Some(parent) = out_file.parent() {
        create_dir(parent)?;
    }
    translated.write_tsv(out_file)?;
    Ok(translated)
}

/// Embedding plus the landuse of its city.
pub struct CityInputs<'a> {
    pub embedding: &'a Path,
    pub landuse: &'a Path,
    pub grid: &'a Path,
}

impl CityInputs<'_> {
    fn load(&self) -> Result<(EmbeddingMatrix, LanduseGrid), PipelineError> {
        let grid = load_grid(self.grid)?;
        Ok((load_embedding(self.embedding)?, load_landuse(self.landuse, &grid)?))
    }
}

pub fn run_evaluate_intra(city: &CityInputs<'_>, cfg: &PipelineConfig, out_file: &Path) -> Result<ValidationReport, PipelineError> {
    let (x, landuse) = city.load()?;
    let report = intra_city_report(&x, &landuse, &cfg.evaluation_settings())?;
    write_json(&report, out_file)?;
    Ok(report)
}

pub fn run_evaluate_inter(
    source: &CityInputs<'_>,
    target: &CityInputs<'_>,
    cfg: &PipelineConfig,
    out_file: &Path,
) -> Result<ValidationReport, PipelineError> {
    let (x_src, lu_src) = source.load()?;
    let (x_tgt, lu_tgt) = target.load()?;
    let report = inter_city_report(&x_src, &x_tgt, &lu_src, &lu_tgt, &cfg.evaluation_settings())?;
    write_json(&report, out_file)?;
    Ok(report)
}

/// Anchor-count sweep; `corpora` are the two corpus directories.
pub fn run_sweep(
    source: &CityInputs<'_>,
    target: &CityInputs<'_>,
    corpora: (&Path, &Path),
    cfg: &PipelineConfig,
    out_file: &Path,
) -> Result<SensitivityCurve, PipelineError> {
    let (x_src, lu_src) = source.load()?;
    let (x_tgt, lu_tgt) = target.load()?;
    let (c_src, c_tgt) = (load_corpus(corpora.0)?, load_corpus(corpora.1)?);
    check_city(&c_src.city_id, x_src.city_id())?;
    check_city(&c_tgt.city_id, x_tgt.city_id())?;
    let curve = sensitivity_sweep(
        &c_src,
        &c_tgt,
        &x_src,
        &x_tgt,
        &lu_src,
        &lu_tgt,
        &cfg.sweep.label,
        &cfg.sweep.n_values,
        &cfg.evaluation_settings(),
    )?;
    write_json(&curve, out_file)?;
    Ok(curve)
}

/// Similarity of one (translated) source place to every target place, as
/// `simmap.geojson` and `simmap.csv` in `out`.
pub fn run_simmap(
    place: PlaceId,
    source: &Path,
    target: &Path,
    target_grid: &Path,
    out: &Path,
) -> Result<usize, PipelineError> {
    let x_src = load_embedding(source)?;
    let x_tgt = load_embedding(target)?;
    let grid = load_grid(target_grid)?;
    let map = similarity_map(place, &x_src, &x_tgt)?;
    create_dir(out)?;
    map.write_geojson(&grid, &out.join("simmap.geojson"))?;
    map.write_csv(&grid, &out.join("simmap.csv"))?;
    Ok(map.entries.len())
}
