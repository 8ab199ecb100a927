//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `PLSHCKPT`, a little-endian `u32` format
//! version, a little-endian `u64` length followed by that many bytes of JSON
//! metadata (configuration, vocabulary, training record, tensor shapes), then
//! every tensor's values as little-endian `f64` in metadata order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::network::MaskProbe;
use super::params::{LstmLayer, Params};
use super::{EmbeddingError, ModelConfig, TrainedModel, Vocabulary};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PLSHCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    vocab: Vocabulary,
    best_epoch: usize,
    validation_loss_history: Vec<f64>,
    train_loss_history: Vec<f64>,
    max_masked_prob: f64,
    max_masked_grad: f64,
    rows_checked: u64,
    tensors: Vec<(String, Vec<usize>)>,
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<(), EmbeddingError> {
    let p = &model.params;
    let meta = Meta {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        best_epoch: model.best_epoch,
        validation_loss_history: model.validation_loss_history.clone(),
        train_loss_history: model.train_loss_history.clone(),
        max_masked_prob: model.mask_probe.max_masked_prob,
        max_masked_grad: model.mask_probe.max_masked_grad,
        rows_checked: model.mask_probe.rows_checked,
        tensors: p
            .tensor_names()
            .into_iter()
            .zip(p.tensors())
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect(),
    };
    let json = serde_json::to_vec(&meta)?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    out.write_u64::<LittleEndian>(json.len() as u64)?;
    out.write_all(&json)?;
    for t in p.tensors() {
        for &v in t.iter() {
            out.write_f64::<LittleEndian>(v)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel, EmbeddingError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(EmbeddingError::Checkpoint("not a model checkpoint".into()));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(EmbeddingError::Checkpoint(format!(
            "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let len = input.read_u64::<LittleEndian>()? as usize;
    let mut json = vec![0u8; len];
    input.read_exact(&mut json)?;
    let meta: Meta = serde_json::from_slice(&json)?;

    meta.config.validate()?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut params = Params::init(&meta.config, meta.vocab.len(), &mut rng);
    let expected: Vec<(String, Vec<usize>)> = params
        .tensor_names()
        .into_iter()
        .zip(params.tensors())
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if expected != meta.tensors {
        return Err(EmbeddingError::Checkpoint("tensor layout does not match configuration".into()));
    }
    for mut t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = input.read_f64::<LittleEndian>()?;
        }
    }
    debug_assert!(params.lstm.iter().all(|l: &LstmLayer| l.b.len() == 4 * l.hidden()));
    Ok(TrainedModel {
        config: meta.config,
        vocab: meta.vocab,
        params,
        best_epoch: meta.best_epoch,
        validation_loss_history: meta.validation_loss_history,
        train_loss_history: meta.train_loss_history,
        mask_probe: MaskProbe {
            max_masked_prob: meta.max_masked_prob,
            max_masked_grad: meta.max_masked_grad,
            rows_checked: meta.rows_checked,
        },
    })
}
