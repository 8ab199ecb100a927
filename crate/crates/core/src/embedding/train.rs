use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::seed::fnv1a;
use crate::trajectory::{MobilityCorpus, Staypoint};
use crate::types::CityId;

use super::features::StepInput;
use super::matrix::EmbeddingMatrix;
use super::network::{self, Batch, Dropout, MaskProbe, Target};
use super::optim::{clip_global_norm, Adam};
use super::params::Params;
use super::{EmbeddingError, ModelConfig, Vocabulary};

/// Best-epoch parameters plus the training record.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Params,
    pub best_epoch: usize,
    pub validation_loss_history: Vec<f64>,
    pub train_loss_history: Vec<f64>,
    /// Masked-output check accumulated over every training step.
    pub mask_probe: MaskProbe,
}

/// One truncated-backpropagation window of a user's sequence.
#[derive(Debug, Clone)]
struct Window {
    inputs: Vec<StepInput>,
    targets: Vec<Target>,
}

/// Whether a user belongs to the held-out split. Depends only on the id.
pub fn is_validation_user(user_id: &str, fraction: f64) -> bool {
    (fnv1a(user_id.as_bytes()) % 1_000_000) as f64 / 1_000_000.0 < fraction
}

fn windows_of(
    staypoints: &[Staypoint],
    city: &CityId,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    out: &mut Vec<Window>,
) {
    if staypoints.len() < 2 {
        return;
    }
    let offset = cfg.utc_offset_s();
    let steps: Vec<StepInput> = staypoints
        .iter()
        .map(|sp| StepInput::from_staypoint(vocab, city, sp, offset))
        .collect();
    let n_pred = steps.len() - 1;
    for start in (0..n_pred).step_by(cfg.bptt_window) {
        let end = (start + cfg.bptt_window).min(n_pred);
        out.push(Window {
            inputs: steps[start..end].to_vec(),
            targets: steps[start + 1..=end]
                .iter()
                .map(|s| Target {
                    index: s.place,
                    candidates: vocab.candidates_for(s.place),
                })
                .collect(),
        });
    }
}

fn make_batch(windows: &[&Window]) -> Batch {
    let steps = windows.iter().map(|w| w.inputs.len()).max().unwrap_or(0);
    let mut batch = Batch {
        inputs: vec![Vec::with_capacity(windows.len()); steps],
        targets: vec![Vec::with_capacity(windows.len()); steps],
    };
    for w in windows {
        for t in 0..steps {
            batch.inputs[t].push(w.inputs.get(t).copied().unwrap_or(StepInput::PAD));
            batch.targets[t].push(w.targets.get(t).cloned());
        }
    }
    batch
}

fn mean_loss(params: &Params, windows: &[Window], batch_size: usize) -> f64 {
    let refs: Vec<&Window> = windows.iter().collect();
    let (mut sum, mut n) = (0.0, 0usize);
    for chunk in refs.chunks(batch_size) {
        let (s, c) = network::loss_only(params, &make_batch(chunk));
        sum += s;
        n += c;
    }
    sum / n as f64
}

fn train_on(corpora: &[&MobilityCorpus], cfg: &ModelConfig) -> Result<TrainedModel, EmbeddingError> {
    cfg.validate()?;
    let vocab = Vocabulary::from_corpora(corpora)?;
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for corpus in corpora {
        for seq in &corpus.sequences {
            let dest = if is_validation_user(&seq.user_id, cfg.validation_fraction) {
                &mut valid
            } else {
                &mut train
            };
            windows_of(&seq.staypoints, &corpus.city_id, &vocab, cfg, dest);
        }
    }
    if train.is_empty() || valid.is_empty() {
        return Err(EmbeddingError::CorpusTooSmall(format!(
            "{} training and {} validation windows; need at least one of each",
            train.len(),
            valid.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = Params::init(cfg, vocab.len(), &mut rng);
    let mut grads = params.zeros_like();
    let mut adam = Adam::new(&params, cfg.learning_rate);
    let mut probe = MaskProbe::default();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut validation_loss_history = Vec::with_capacity(cfg.epochs);
    let mut train_loss_history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    log::info!(
        "training on {} windows ({} validation), vocabulary {}",
        train.len(),
        valid.len(),
        vocab.len()
    );
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let windows: Vec<&Window> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = make_batch(&windows);
            let mut dropout = Dropout {
                keep: cfg.dropout_keep,
                rng: &mut rng,
            };
            let (s, c) = network::loss_and_grad(&params, &batch, Some(&mut dropout), &mut grads, &mut probe);
            if !s.is_finite() {
                return Err(EmbeddingError::NonFinite(format!("training loss at epoch {epoch}")));
            }
            clip_global_norm(&mut grads, cfg.grad_clip);
            adam.step(&mut params, &grads);
            sum += s;
            count += c;
        }
        let train_loss = sum / count as f64;
        let val_loss = mean_loss(&params, &valid, cfg.batch_size);
        if !val_loss.is_finite() {
            return Err(EmbeddingError::NonFinite(format!("validation loss at epoch {epoch}")));
        }
        log::info!("epoch {epoch}: train loss {train_loss:.5}, validation loss {val_loss:.5}");
        train_loss_history.push(train_loss);
        validation_loss_history.push(val_loss);
        if val_loss < best.0 {
            best = (val_loss, params.clone(), epoch);
        }
    }
    let (_, params, best_epoch) = best;
    log::info!("best epoch {best_epoch}");
    Ok(TrainedModel {
        config: cfg.clone(),
        vocab,
        params,
        best_epoch,
        validation_loss_history,
        train_loss_history,
        mask_probe: probe,
    })
}

/// Trains the next-staypoint model on one city.
pub fn train_moblstm(corpus: &MobilityCorpus, cfg: &ModelConfig) -> Result<TrainedModel, EmbeddingError> {
    train_on(&[corpus], cfg)
}

/// Trains one model over two cities' merged corpora. Each target's softmax
/// only ranges over its own city's places. Returns the model and both
/// cities' slices of its place table.
pub fn train_joint_moblstm(
    corpus_phi: &MobilityCorpus,
    corpus_psi: &MobilityCorpus,
    cfg: &ModelConfig,
) -> Result<(TrainedModel, EmbeddingMatrix, EmbeddingMatrix), EmbeddingError> {
    if corpus_phi.city_id == corpus_psi.city_id {
        return Err(EmbeddingError::CityCollision(corpus_phi.city_id.clone()));
    }
    if corpus_phi.n_places() == 0 || corpus_psi.n_places() == 0 {
        return Err(EmbeddingError::CorpusTooSmall("joint training needs two non-empty corpora".into()));
    }
    let model = train_on(&[corpus_phi, corpus_psi], cfg)?;
    let space = joint_space_tag(&corpus_phi.city_id, &corpus_psi.city_id);
    let x_phi = export_embeddings(&model, &corpus_phi.city_id)?.with_space(space.clone());
    let x_psi = export_embeddings(&model, &corpus_psi.city_id)?.with_space(space);
    Ok((model, x_phi, x_psi))
}

pub fn joint_space_tag(phi: &CityId, psi: &CityId) -> String {
    format!("joint:{phi}+{psi}")
}

/// The best-epoch place table rows of `city`, one column per place; the
/// unknown-place row is never exported.
pub fn export_embeddings(model: &TrainedModel, city: &CityId) -> Result<EmbeddingMatrix, EmbeddingError> {
    let slice = model
        .vocab
        .slice(city)
        .ok_or_else(|| EmbeddingError::UnknownCity(city.clone()))?;
    let rows = model.params.place_emb.slice(ndarray::s![slice.range(), ..]);
    EmbeddingMatrix::new(city.clone(), slice.places.clone(), rows.t().to_owned())
}

/// Probability of each vocabulary row being the next place after `prefix`
/// (a sequence in `city`). Entries outside `city`'s rows are zero.
pub fn next_place_distribution(
    model: &TrainedModel,
    city: &CityId,
    prefix: &[Staypoint],
) -> Result<Vec<f64>, EmbeddingError> {
    if prefix.is_empty() {
        return Err(EmbeddingError::EmptyPrefix);
    }
    let slice = model
        .vocab
        .slice(city)
        .ok_or_else(|| EmbeddingError::UnknownCity(city.clone()))?;
    let offset = model.config.utc_offset_s();
    let steps: Vec<StepInput> = prefix
        .iter()
        .map(|sp| StepInput::from_staypoint(&model.vocab, city, sp, offset))
        .collect();
    Ok(network::predict_next(&model.params, &steps, slice.range()))
}
