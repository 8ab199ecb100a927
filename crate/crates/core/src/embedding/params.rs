use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMut2, ArrayView2, ArrayViewMutD};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::features::{DURATION_BUCKETS, HOUR_BUCKETS};
use super::ModelConfig;

/// One LSTM layer. `w` maps `[input, h_prev]` to the four gate
/// pre-activations laid out as `[input | forget | cell | output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmLayer {
    pub fn hidden(&self) -> usize {
        self.b.len() / 4
    }

    pub fn input(&self) -> usize {
        self.w.nrows() - self.hidden()
    }
}

/// All trainable tensors. The place table doubles as the output projection,
/// so there is no separate output weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `vocab x place_dim`
    pub place_emb: Array2<f64>,
    /// `24 x time_dim`
    pub hour_emb: Array2<f64>,
    /// `8 x duration_dim`
    pub dur_emb: Array2<f64>,
    pub lstm: Vec<LstmLayer>,
    /// `(layers * lstm_size) x readout_dim`
    pub readout_w: Array2<f64>,
    pub readout_b: Array1<f64>,
    /// Output bias over the vocabulary.
    pub out_bias: Array1<f64>,
}

fn uniform<R: Rng>(rng: &mut R, shape: (usize, usize), scale: f64) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-scale, scale).expect("valid range");
    Array2::from_shape_simple_fn(shape, || dist.sample(rng))
}

impl Params {
    pub fn init<R: Rng>(cfg: &ModelConfig, vocab_len: usize, rng: &mut R) -> Self {
        let h = cfg.lstm_size;
        let place_emb = uniform(rng, (vocab_len, cfg.place_dim), 0.1);
        let hour_emb = uniform(rng, (HOUR_BUCKETS, cfg.time_dim), 0.1);
        let dur_emb = uniform(rng, (DURATION_BUCKETS, cfg.duration_dim), 0.1);
        let mut lstm = Vec::with_capacity(cfg.lstm_layers);
        for l in 0..cfg.lstm_layers {
            let input = if l == 0 { cfg.step_dim() } else { h };
            let w = uniform(rng, (input + h, 4 * h), 1.0 / (h as f64).sqrt());
            let mut b = Array1::zeros(4 * h);
            b.slice_mut(ndarray::s![h..2 * h]).fill(1.0);
            lstm.push(LstmLayer { w, b });
        }
        let fan = cfg.lstm_layers * h;
        let readout_w = uniform(rng, (fan, cfg.readout_dim), (6.0 / (fan + cfg.readout_dim) as f64).sqrt());
        Params {
            place_emb,
            hour_emb,
            dur_emb,
            lstm,
            readout_w,
            readout_b: Array1::zeros(cfg.readout_dim),
            out_bias: Array1::zeros(vocab_len),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            place_emb: Array2::zeros(self.place_emb.raw_dim()),
            hour_emb: Array2::zeros(self.hour_emb.raw_dim()),
            dur_emb: Array2::zeros(self.dur_emb.raw_dim()),
            lstm: self
                .lstm
                .iter()
                .map(|l| LstmLayer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
            readout_w: Array2::zeros(self.readout_w.raw_dim()),
            readout_b: Array1::zeros(self.readout_b.raw_dim()),
            out_bias: Array1::zeros(self.out_bias.raw_dim()),
        }
    }

    pub fn vocab_len(&self) -> usize {
        self.place_emb.nrows()
    }

    pub fn place_dim(&self) -> usize {
        self.place_emb.ncols()
    }

    /// The output layer's weight matrix: the place table itself.
    pub fn output_projection(&self) -> ArrayView2<'_, f64> {
        self.place_emb.view()
    }

    pub fn output_projection_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        self.place_emb.view_mut()
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec!["place_emb".to_owned(), "hour_emb".into(), "dur_emb".into()];
        for l in 0..self.lstm.len() {
            names.push(format!("lstm{l}.w"));
            names.push(format!("lstm{l}.b"));
        }
        names.extend(["readout_w".into(), "readout_b".into(), "out_bias".into()]);
        names
    }

    /// Tensors in a fixed order matching [`Params::tensor_names`].
    pub fn tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut t = vec![
            self.place_emb.view().into_dyn(),
            self.hour_emb.view().into_dyn(),
            self.dur_emb.view().into_dyn(),
        ];
        for l in &self.lstm {
            t.push(l.w.view().into_dyn());
            t.push(l.b.view().into_dyn());
        }
        t.push(self.readout_w.view().into_dyn());
        t.push(self.readout_b.view().into_dyn());
        t.push(self.out_bias.view().into_dyn());
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut t = vec![
            self.place_emb.view_mut().into_dyn(),
            self.hour_emb.view_mut().into_dyn(),
            self.dur_emb.view_mut().into_dyn(),
        ];
        for l in &mut self.lstm {
            t.push(l.w.view_mut().into_dyn());
            t.push(l.b.view_mut().into_dyn());
        }
        t.push(self.readout_w.view_mut().into_dyn());
        t.push(self.readout_b.view_mut().into_dyn());
        t.push(self.out_bias.view_mut().into_dyn());
        t
    }

    pub fn fill_zero(&mut self) {
        for mut t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for mut t in self.tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}
