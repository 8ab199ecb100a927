use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;

use super::matrix::orthogonality_error;
use super::{Method, TranslationError, TranslationMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvConfig {
    pub disc_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub label_smoothing: f64,
    pub map_learning_rate: f64,
    pub disc_learning_rate: f64,
    /// Number of (discriminator step, mapping step) rounds.
    pub steps: usize,
    pub batch_size: usize,
    /// Orthogonalization strength.
    pub beta: f64,
    /// Share of each city's columns kept out of training for the final
    /// discriminator accuracy.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for AdvConfig {
    fn default() -> Self {
        AdvConfig {
            disc_hidden: vec![256, 256],
            leaky_slope: 0.2,
            label_smoothing: 0.1,
            map_learning_rate: 0.002,
            disc_learning_rate: 0.01,
            steps: 3000,
            batch_size: 32,
            beta: 0.01,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl AdvConfig {
    pub fn validate(&self) -> Result<(), TranslationError> {
        let bad = |m: &str| Err(TranslationError::Config(m.into()));
        if !(self.map_learning_rate > 0.0 && self.disc_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return bad("beta must lie in (0, 0.5)");
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return bad("label_smoothing must lie in [0, 0.5)");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        if self.steps == 0 || self.batch_size == 0 || self.disc_hidden.iter().any(|&h| h == 0) {
            return bad("steps, batch_size and hidden sizes must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialOutcome {
    pub matrix: TranslationMatrix,
    /// Discriminator accuracy on its own training batch, one entry per step.
    pub disc_accuracy: Vec<f64>,
    /// Accuracy on the held-out columns after training (NaN when nothing was
    /// held out).
    pub heldout_accuracy: f64,
    /// Largest `‖RᵀR − I‖_F` seen after any mapping step.
    pub max_orthogonality_error: f64,
}

/// Fully connected binary classifier with leaky-rectifier hidden layers and
/// a single logit output. Label 1 means "mapped source".
struct Discriminator {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    slope: f64,
}

struct Pass {
    /// Inputs to every layer (the batch itself first).
    inputs: Vec<Array2<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Array2<f64>>,
    logits: Array1<f64>,
}

impl Discriminator {
    fn new(dim: usize, hidden: &[usize], slope: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let scale = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let dist = Uniform::new_inclusive(-scale, scale).expect("valid range");
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), || dist.sample(rng)));
            biases.push(Array1::zeros(w[1]));
        }
        Discriminator { weights, biases, slope }
    }

    fn forward(&self, x: Array2<f64>) -> Pass {
        let last = self.weights.len() - 1;
        let mut inputs = vec![x];
        let mut pre = Vec::with_capacity(last);
        for l in 0..last {
            let z = inputs[l].dot(&self.weights[l]) + &self.biases[l];
            let slope = self.slope;
            inputs.push(z.mapv(|v| if v > 0.0 { v } else { slope * v }));
            pre.push(z);
        }
        let out = inputs[last].dot(&self.weights[last]) + &self.biases[last];
        Pass {
            inputs,
            pre,
            logits: out.column(0).to_owned(),
        }
    }

    /// Gradients of the loss w.r.t. every weight, bias and the input batch,
    /// given the loss gradient w.r.t. the logits.
    fn backward(&self, pass: &Pass, dlogits: &Array1<f64>) -> (Vec<Array2<f64>>, Vec<Array1<f64>>, Array2<f64>) {
        let layers = self.weights.len();
        let mut dw = vec![Array2::zeros((0, 0)); layers];
        let mut db = vec![Array1::zeros(0); layers];
        let mut delta = dlogits.clone().insert_axis(Axis(1));
        for l in (0..layers).rev() {
            dw[l] = pass.inputs[l].t().dot(&delta);
            db[l] = delta.sum_axis(Axis(0));
            let mut dx = delta.dot(&self.weights[l].t());
            if l > 0 {
                let slope = self.slope;
                dx.zip_mut_with(&pass.pre[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g *= slope;
                    }
                });
            }
            delta = dx;
        }
        (dw, db, delta)
    }

    fn sgd(&mut self, dw: &[Array2<f64>], db: &[Array1<f64>], lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(dw) {
            w.scaled_add(-lr, g);
        }
        for (b, g) in self.biases.iter_mut().zip(db) {
            b.scaled_add(-lr, g);
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean binary cross-entropy from logits, and its gradient w.r.t. them.
fn bce(logits: &Array1<f64>, labels: &Array1<f64>) -> (f64, Array1<f64>) {
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array1::zeros(logits.len());
    for ((g, &z), &y) in grad.iter_mut().zip(logits).zip(labels) {
        // softplus(z) - y z, written to stay finite for large |z|
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        *g = (sigmoid(z) - y) / n;
    }
    (loss / n, grad)
}

fn accuracy(logits: &Array1<f64>, n_source: usize) -> f64 {
    let correct = logits
        .iter()
        .enumerate()
        .filter(|&(k, &z)| (z > 0.0) == (k < n_source))
        .count();
    correct as f64 / logits.len() as f64
}

/// Rows are samples: the chosen columns of `x`.
fn gather(x: &Array2<f64>, cols: &[usize]) -> Array2<f64> {
    x.select(Axis(1), cols).reversed_axes()
}

fn split(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let held = ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1));
    let train = idx.split_off(held);
    (train, idx)
}

/// Learns `R` so that a discriminator cannot tell columns of `R·x_phi` from
/// columns of `x_psi`, softly keeping `R` orthogonal.
pub fn adversarial_align(
    x_phi: &EmbeddingMatrix,
    x_psi: &EmbeddingMatrix,
    cfg: &AdvConfig,
) -> Result<AdversarialOutcome, TranslationError> {
    cfg.validate()?;
    if x_phi.n_places() == 0 || x_psi.n_places() == 0 {
        return Err(TranslationError::Dimension("both embeddings need at least one place".into()));
    }
    if x_phi.dim() != x_psi.dim() {
        return Err(TranslationError::Dimension(format!(
            "source d={}, target d={}",
            x_phi.dim(),
            x_psi.dim()
        )));
    }
    let d = x_phi.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (src_train, src_held) = split(x_phi.n_places(), cfg.holdout_fraction, &mut rng);
    let (tgt_train, tgt_held) = split(x_psi.n_places(), cfg.holdout_fraction, &mut rng);
    let mut disc = Discriminator::new(d, &cfg.disc_hidden, cfg.leaky_slope, &mut rng);
    let mut r = Array2::<f64>::eye(d);
    let b = cfg.batch_size;
    let smooth = cfg.label_smoothing;

    let mut labels = Array1::from_elem(2 * b, smooth);
    labels.slice_mut(ndarray::s![..b]).fill(1.0 - smooth);
    let fool_labels = Array1::from_elem(b, smooth);

    let mut disc_accuracy = Vec::with_capacity(cfg.steps);
    let mut max_orth: f64 = 0.0;
    for step in 0..cfg.steps {
        // Discriminator step on mapped source vs target.
        let src: Vec<usize> = (0..b).map(|_| src_train[rng.random_range(0..src_train.len())]).collect();
        let tgt: Vec<usize> = (0..b).map(|_| tgt_train[rng.random_range(0..tgt_train.len())]).collect();
        let mapped = gather(x_phi.values(), &src).dot(&r.t());
        let mut batch = Array2::zeros((2 * b, d));
        batch.slice_mut(ndarray::s![..b, ..]).assign(&mapped);
        batch.slice_mut(ndarray::s![b.., ..]).assign(&gather(x_psi.values(), &tgt));
        let pass = disc.forward(batch);
        let (loss, dlogits) = bce(&pass.logits, &labels);
        if !loss.is_finite() {
            return Err(TranslationError::Diverged { step });
        }
        disc_accuracy.push(accuracy(&pass.logits, b));
        let (dw, db, _) = disc.backward(&pass, &dlogits);
        disc.sgd(&dw, &db, cfg.disc_learning_rate);

        // Mapping step: push mapped source towards the "target" label.
        let src: Vec<usize> = (0..b).map(|_| src_train[rng.random_range(0..src_train.len())]).collect();
        let raw = gather(x_phi.values(), &src);
        let pass = disc.forward(raw.dot(&r.t()));
        let (loss, dlogits) = bce(&pass.logits, &fool_labels);
        if !loss.is_finite() {
            return Err(TranslationError::Diverged { step });
        }
        let (_, _, dmapped) = disc.backward(&pass, &dlogits);
        // mapped = raw Rᵀ  =>  dL/dR = dmappedᵀ raw
        let dr = dmapped.t().dot(&raw);
        r.scaled_add(-cfg.map_learning_rate, &dr);
        // R <- (1 + beta) R - beta (R Rᵀ) R
        let rrt_r = r.dot(&r.t()).dot(&r);
        r = &r * (1.0 + cfg.beta) - &rrt_r * cfg.beta;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(TranslationError::Diverged { step });
        }
        max_orth = max_orth.max(orthogonality_error(&r));
    }

    let heldout_accuracy = if src_held.is_empty() || tgt_held.is_empty() {
        f64::NAN
    } else {
        let mapped = gather(x_phi.values(), &src_held).dot(&r.t());
        let target = gather(x_psi.values(), &tgt_held);
        let batch = ndarray::concatenate![Axis(0), mapped, target];
        accuracy(&disc.forward(batch).logits, src_held.len())
    };

    Ok(AdversarialOutcome {
        matrix: TranslationMatrix {
            source_city: x_phi.city_id().clone(),
            target_city: x_psi.city_id().clone(),
            method: Method::Adversarial,
            r,
        },
        disc_accuracy,
        heldout_accuracy,
        max_orthogonality_error: max_orth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discriminator_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let disc = Discriminator::new(3, &[5, 4], 0.2, &mut rng);
        let x = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let labels = Array1::from_vec(vec![0.9, 0.9, 0.9, 0.1, 0.1, 0.1]);
        let pass = disc.forward(x.clone());
        let (_, dlogits) = bce(&pass.logits, &labels);
        let (_, _, dx) = disc.backward(&pass, &dlogits);
        let eps = 1e-6;
        for i in 0..6 {
            for j in 0..3 {
                let mut plus = x.clone();
                plus[[i, j]] += eps;
                let mut minus = x.clone();
                minus[[i, j]] -= eps;
                let numeric = (bce(&disc.forward(plus).logits, &labels).0
                    - bce(&disc.forward(minus).logits, &labels).0)
                    / (2.0 * eps);
                assert!((numeric - dx[[i, j]]).abs() < 1e-7, "{numeric} vs {}", dx[[i, j]]);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(AdvConfig::default().validate().is_ok());
        for bad in [
            AdvConfig { beta: 0.0, ..AdvConfig::default() },
            AdvConfig { beta: 0.5, ..AdvConfig::default() },
            AdvConfig { map_learning_rate: 0.0, ..AdvConfig::default() },
            AdvConfig { disc_learning_rate: -1.0, ..AdvConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
