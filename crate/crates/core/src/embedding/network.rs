//! Forward and backward passes of the stacked-LSTM next-place model.
//!
//! Per step: `[place; hour; duration]` lookup -> dropout -> LSTM stack ->
//! concatenated hidden states -> dropout -> tanh readout -> dropout ->
//! logits against the (tied) place table plus a bias -> masked softmax.

use std::ops::Range;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::features::StepInput;
use super::params::Params;

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub index: usize,
    /// Rows allowed in the softmax; everything else is masked to -inf.
    pub candidates: Range<usize>,
}

/// A padded batch laid out time-major: `inputs[t][b]`, `targets[t][b]`.
/// `None` targets are padding and contribute nothing.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub inputs: Vec<Vec<StepInput>>,
    pub targets: Vec<Vec<Option<Target>>>,
}

impl Batch {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn size(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn n_targets(&self) -> usize {
        self.targets.iter().flatten().filter(|t| t.is_some()).count()
    }
}

pub struct Dropout<'a> {
    pub keep: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn mask(&mut self, shape: (usize, usize)) -> Option<Array2<f64>> {
        if self.keep >= 1.0 {
            return None;
        }
        let (keep, scale) = (self.keep, 1.0 / self.keep);
        let rng = &mut *self.rng;
        Some(Array2::from_shape_simple_fn(shape, || {
            if rng.random::<f64>() < keep {
                scale
            } else {
                0.0
            }
        }))
    }
}

/// Largest probability and logit gradient observed on masked (non-candidate)
/// output rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MaskProbe {
    pub max_masked_prob: f64,
    pub max_masked_grad: f64,
    pub rows_checked: u64,
}

impl MaskProbe {
    pub fn merge(&mut self, other: &MaskProbe) {
        self.max_masked_prob = self.max_masked_prob.max(other.max_masked_prob);
        self.max_masked_grad = self.max_masked_grad.max(other.max_masked_grad);
        self.rows_checked += other.rows_checked;
    }
}

struct LayerState {
    zin: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    c: Array2<f64>,
    tc: Array2<f64>,
    h: Array2<f64>,
}

struct StepCache {
    x_mask: Option<Array2<f64>>,
    layers: Vec<LayerState>,
    u: Array2<f64>,
    u_mask: Option<Array2<f64>>,
    r: Array2<f64>,
    r_mask: Option<Array2<f64>>,
    r_drop: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn apply_mask(x: &mut Array2<f64>, mask: &Option<Array2<f64>>) {
    if let Some(m) = mask {
        *x *= m;
    }
}

fn gather_inputs(params: &Params, inputs: &[StepInput]) -> Array2<f64> {
    let (p, t, d) = (params.place_dim(), params.hour_emb.ncols(), params.dur_emb.ncols());
    let mut x = Array2::zeros((inputs.len(), p + t + d));
    for (b, step) in inputs.iter().enumerate() {
        let mut row = x.row_mut(b);
        row.slice_mut(s![..p]).assign(&params.place_emb.row(step.place));
        row.slice_mut(s![p..p + t]).assign(&params.hour_emb.row(step.hour));
        row.slice_mut(s![p + t..]).assign(&params.dur_emb.row(step.duration));
    }
    x
}

fn forward(params: &Params, inputs: &[Vec<StepInput>], mut dropout: Option<&mut Dropout>) -> Vec<StepCache> {
    let batch = inputs.first().map_or(0, Vec::len);
    let layers = params.lstm.len();
    let mut caches: Vec<StepCache> = Vec::with_capacity(inputs.len());
    for step_inputs in inputs {
        let mut x = gather_inputs(params, step_inputs);
        let x_mask = dropout.as_mut().and_then(|d| d.mask(x.dim()));
        apply_mask(&mut x, &x_mask);

        let mut states: Vec<LayerState> = Vec::with_capacity(layers);
        for (l, layer) in params.lstm.iter().enumerate() {
            let hd = layer.hidden();
            let input = if l == 0 { x.view() } else { states[l - 1].h.view() };
            let in_dim = input.ncols();
            let mut zin = Array2::zeros((batch, in_dim + hd));
            zin.slice_mut(s![.., ..in_dim]).assign(&input);
            if let Some(prev) = caches.last() {
                zin.slice_mut(s![.., in_dim..]).assign(&prev.layers[l].h);
            }
            let mut z = zin.dot(&layer.w);
            z += &layer.b;
            let i = z.slice(s![.., ..hd]).mapv(sigmoid);
            let f = z.slice(s![.., hd..2 * hd]).mapv(sigmoid);
            let g = z.slice(s![.., 2 * hd..3 * hd]).mapv(f64::tanh);
            let o = z.slice(s![.., 3 * hd..]).mapv(sigmoid);
            let mut c = &i * &g;
            if let Some(prev) = caches.last() {
                c += &(&f * &prev.layers[l].c);
            }
            let tc = c.mapv(f64::tanh);
            let h = &o * &tc;
            states.push(LayerState { zin, i, f, g, o, c, tc, h });
        }

        let hd = params.lstm[0].hidden();
        let mut u = Array2::zeros((batch, layers * hd));
        for (l, st) in states.iter().enumerate() {
            u.slice_mut(s![.., l * hd..(l + 1) * hd]).assign(&st.h);
        }
        let u_mask = dropout.as_mut().and_then(|d| d.mask(u.dim()));
        apply_mask(&mut u, &u_mask);
        let mut r = u.dot(&params.readout_w);
        r += &params.readout_b;
        r.mapv_inplace(f64::tanh);
        let r_mask = dropout.as_mut().and_then(|d| d.mask(r.dim()));
        let mut r_drop = r.clone();
        apply_mask(&mut r_drop, &r_mask);

        caches.push(StepCache {
            x_mask,
            layers: states,
            u,
            u_mask,
            r,
            r_mask,
            r_drop,
        });
    }
    caches
}

fn logits(params: &Params, r_drop: &Array2<f64>) -> Array2<f64> {
    let mut z = r_drop.dot(&params.output_projection().t());
    z += &params.out_bias;
    z
}

/// Masked softmax of one row in place; returns the row's log-likelihood of
/// `target`.
fn masked_softmax(row: &mut ndarray::ArrayViewMut1<f64>, candidates: &Range<usize>, target: usize) -> f64 {
    for (j, v) in row.iter_mut().enumerate() {
        if !candidates.contains(&j) {
            *v = f64::NEG_INFINITY;
        }
    }
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let target_logit = row[target] - max;
    row.mapv_inplace(|v| (v - max).exp());
    let sum = row.sum();
    *row /= sum;
    target_logit - sum.ln()
}

/// Mean cross-entropy and its gradient (accumulated into `grads`, which is
/// zeroed first). Returns `(sum_of_losses, n_targets)`.
pub fn loss_and_grad(
    params: &Params,
    batch: &Batch,
    dropout: Option<&mut Dropout>,
    grads: &mut Params,
    probe: &mut MaskProbe,
) -> (f64, usize) {
    grads.fill_zero();
    let n_targets = batch.n_targets();
    if n_targets == 0 {
        return (0.0, 0);
    }
    let norm = 1.0 / n_targets as f64;
    let caches = forward(params, &batch.inputs, dropout);
    let size = batch.size();
    let layers = params.lstm.len();
    let hd = params.lstm[0].hidden();

    // Output layer and readout, per step; collects gradients w.r.t. each
    // layer's hidden state.
    let mut loss = 0.0;
    let mut dh_readout: Vec<Array2<f64>> = Vec::with_capacity(caches.len());
    for (cache, targets) in caches.iter().zip(&batch.targets) {
        let mut dlogits = logits(params, &cache.r_drop);
        for (b, target) in targets.iter().enumerate() {
            let mut row = dlogits.row_mut(b);
            let Some(t) = target else {
                row.fill(0.0);
                continue;
            };
            loss -= masked_softmax(&mut row, &t.candidates, t.index);
            row[t.index] -= 1.0;
            row *= norm;
            for (j, &g) in row.iter().enumerate() {
                if !t.candidates.contains(&j) {
                    // After the update above, a masked entry holds p_j * norm.
                    probe.max_masked_prob = probe.max_masked_prob.max(g.abs() / norm);
                    probe.max_masked_grad = probe.max_masked_grad.max(g.abs());
                }
            }
            probe.rows_checked += 1;
        }
        general_mat_mul(1.0, &dlogits.t(), &cache.r_drop, 1.0, &mut grads.place_emb);
        grads.out_bias += &dlogits.sum_axis(Axis(0));
        let mut dr = dlogits.dot(&params.place_emb);
        apply_mask(&mut dr, &cache.r_mask);
        let da = dr * &cache.r.mapv(|v| 1.0 - v * v);
        general_mat_mul(1.0, &cache.u.t(), &da, 1.0, &mut grads.readout_w);
        grads.readout_b += &da.sum_axis(Axis(0));
        let mut du = da.dot(&params.readout_w.t());
        apply_mask(&mut du, &cache.u_mask);
        dh_readout.push(du);
    }

    // Backpropagation through time, top layer first within each step.
    let mut dh_next: Vec<Array2<f64>> = vec![Array2::zeros((size, hd)); layers];
    let mut dc_next: Vec<Array2<f64>> = vec![Array2::zeros((size, hd)); layers];
    for t in (0..caches.len()).rev() {
        let cache = &caches[t];
        let mut d_from_above: Option<Array2<f64>> = None;
        for l in (0..layers).rev() {
            let st = &cache.layers[l];
            let layer = &params.lstm[l];
            let mut dh = &dh_readout[t].slice(s![.., l * hd..(l + 1) * hd]) + &dh_next[l];
            if let Some(d) = d_from_above.take() {
                dh += &d;
            }
            let dc = &dc_next[l] + &(&dh * &st.o * &st.tc.mapv(|v| 1.0 - v * v));
            let mut dz = Array2::zeros((size, 4 * hd));
            {
                let c_prev = (t > 0).then(|| &caches[t - 1].layers[l].c);
                let mut di = dz.slice_mut(s![.., ..hd]);
                di.assign(&(&dc * &st.g * &st.i * &st.i.mapv(|v| 1.0 - v)));
                let mut df = dz.slice_mut(s![.., hd..2 * hd]);
                if let Some(cp) = c_prev {
                    df.assign(&(&dc * cp * &st.f * &st.f.mapv(|v| 1.0 - v)));
                }
                let mut dg = dz.slice_mut(s![.., 2 * hd..3 * hd]);
                dg.assign(&(&dc * &st.i * &st.g.mapv(|v| 1.0 - v * v)));
                let mut dox = dz.slice_mut(s![.., 3 * hd..]);
                dox.assign(&(&dh * &st.tc * &st.o * &st.o.mapv(|v| 1.0 - v)));
            }
            dc_next[l] = dc * &st.f;
            general_mat_mul(1.0, &st.zin.t(), &dz, 1.0, &mut grads.lstm[l].w);
            grads.lstm[l].b += &dz.sum_axis(Axis(0));
            let dzin = dz.dot(&layer.w.t());
            let in_dim = layer.input();
            dh_next[l] = dzin.slice(s![.., in_dim..]).to_owned();
            let mut dinput = dzin.slice(s![.., ..in_dim]).to_owned();
            if l > 0 {
                d_from_above = Some(dinput);
            } else {
                apply_mask(&mut dinput, &cache.x_mask);
                scatter_input_grads(grads, &batch.inputs[t], dinput.view());
            }
        }
    }
    (loss, n_targets)
}

fn scatter_input_grads(grads: &mut Params, inputs: &[StepInput], dx: ArrayView2<f64>) {
    let p = grads.place_emb.ncols();
    let t = grads.hour_emb.ncols();
    for (b, step) in inputs.iter().enumerate() {
        let row = dx.row(b);
        let mut e = grads.place_emb.row_mut(step.place);
        e += &row.slice(s![..p]);
        let mut h = grads.hour_emb.row_mut(step.hour);
        h += &row.slice(s![p..p + t]);
        let mut d = grads.dur_emb.row_mut(step.duration);
        d += &row.slice(s![p + t..]);
    }
}

/// Summed cross-entropy without dropout or gradients.
pub fn loss_only(params: &Params, batch: &Batch) -> (f64, usize) {
    let caches = forward(params, &batch.inputs, None);
    let mut loss = 0.0;
    let mut n = 0;
    for (cache, targets) in caches.iter().zip(&batch.targets) {
        let mut z = logits(params, &cache.r_drop);
        for (b, target) in targets.iter().enumerate() {
            if let Some(t) = target {
                loss -= masked_softmax(&mut z.row_mut(b), &t.candidates, t.index);
                n += 1;
            }
        }
    }
    (loss, n)
}

/// Next-place distribution after reading `prefix`, restricted to `candidates`.
pub fn predict_next(params: &Params, prefix: &[StepInput], candidates: Range<usize>) -> Vec<f64> {
    let inputs: Vec<Vec<StepInput>> = prefix.iter().map(|s| vec![*s]).collect();
    let caches = forward(params, &inputs, None);
    let last = caches.last().expect("non-empty prefix");
    let mut z = logits(params, &last.r_drop);
    let target = candidates.start;
    masked_softmax(&mut z.row_mut(0), &candidates, target);
    z.row(0).to_vec()
}

/// Largest relative error per tensor between the analytic gradient and a
/// five-point finite difference, over every entry (dropout off). On tiny
/// models some LSTM weight gradients sit near 1e-8, below what the two-point
/// rule resolves in double precision.
pub fn gradient_check(params: &Params, batch: &Batch) -> Vec<(String, f64)> {
    let mut grads = params.zeros_like();
    let mut probe = MaskProbe::default();
    loss_and_grad(params, batch, None, &mut grads, &mut probe);
    let eps = 1e-3;
    let loss = |p: &Params| {
        let (s, n) = loss_only(p, batch);
        s / n as f64
    };
    let names = params.tensor_names();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.iter().copied().collect()).collect();
    let mut out = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for idx in 0..analytic[k].len() {
            let at = |offset: f64| {
                let mut p = params.clone();
                p.tensors_mut()[k].as_slice_mut().unwrap()[idx] += offset;
                loss(&p)
            };
            let numeric = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
            let a = analytic[k][idx];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        out.push((name.clone(), worst));
    }
    out
}
