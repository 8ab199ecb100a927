use serde::{Deserialize, Serialize};

use super::EmbeddingError;

/// Hyperparameters of the next-staypoint model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub place_dim: usize,
    /// Width of the learned hour-of-day embedding (24 buckets).
    pub time_dim: usize,
    /// Width of the learned log-duration embedding (8 buckets).
    pub duration_dim: usize,
    pub lstm_layers: usize,
    pub lstm_size: usize,
    /// Must equal `place_dim`: the output layer reuses the place table.
    pub readout_dim: usize,
    pub dropout_keep: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Truncated-backpropagation window, in prediction steps.
    pub bptt_window: usize,
    pub grad_clip: f64,
    pub validation_fraction: f64,
    /// Local time offset used for hour-of-day buckets.
    pub utc_offset_hours: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            place_dim: 96,
            time_dim: 8,
            duration_dim: 4,
            lstm_layers: 2,
            lstm_size: 128,
            readout_dim: 96,
            dropout_keep: 0.7,
            epochs: 20,
            learning_rate: 1e-3,
            batch_size: 64,
            bptt_window: 32,
            grad_clip: 5.0,
            validation_fraction: 0.1,
            utc_offset_hours: 9.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn step_dim(&self) -> usize {
        self.place_dim + self.time_dim + self.duration_dim
    }

    pub fn utc_offset_s(&self) -> i64 {
        (self.utc_offset_hours * 3600.0).round() as i64
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::Config(m.to_owned()));
        if self.place_dim == 0 || self.lstm_size == 0 || self.lstm_layers == 0 {
            return bad("dimensions must be positive");
        }
        if self.readout_dim != self.place_dim {
            return bad("readout_dim must equal place_dim for the tied output layer");
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return bad("dropout_keep must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.bptt_window == 0 {
            return bad("learning_rate, batch_size and bptt_window must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }
}
