//! The pipeline configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::ModelConfig;
use crate::evaluation::EvalSettings;
use crate::seed::derive_seed;
use crate::trajectory::ExtractParams;
use crate::translation::{AdvConfig, Method, DEFAULT_ANCHORS};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("i/o error reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("config_version {found} is not supported (expected {CONFIG_VERSION})")]
    Version { found: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationSettings {
    pub method: Method,
    pub n_anchors: usize,
    /// Unit-normalize embedding columns before fitting the map.
    pub normalize: bool,
}

impl Default for TranslationSettings {
    fn default() -> Self {
        TranslationSettings {
            method: Method::Procrustes,
            n_anchors: DEFAULT_ANCHORS,
            normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub label: String,
    pub n_values: Vec<usize>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            label: "shopping".into(),
            n_values: vec![10, 50, 100, 500, 1000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    /// Output directory used when a command gets no `--out`.
    pub out_dir: PathBuf,
}

impl Default for PathSettings {
    fn default() -> Self {
        PathSettings { out_dir: "out".into() }
    }
}

/// Every tunable of the pipeline. The per-section `seed` fields are derived
/// from the top-level `seed` and may not be set directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub config_version: u32,
    pub seed: u64,
    pub paths: PathSettings,
    pub extract: ExtractParams,
    pub model: ModelConfig,
    pub adversarial: AdvConfig,
    pub translation: TranslationSettings,
    pub evaluation: EvalSettings,
    pub sweep: SweepSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            config_version: CONFIG_VERSION,
            seed: 0,
            paths: PathSettings::default(),
            extract: ExtractParams::default(),
            model: ModelConfig::default(),
            adversarial: AdvConfig::default(),
            translation: TranslationSettings::default(),
            evaluation: EvalSettings::default(),
            sweep: SweepSettings::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses TOML. A missing `config_version` is an error so that files from
    /// other versions never run silently.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: toml::Table = toml::from_str(text)?;
        match raw.get("config_version") {
            None => return Err(ConfigError::Invalid("config_version is missing".into())),
            Some(toml::Value::Integer(v)) if *v == CONFIG_VERSION as i64 => {}
            Some(toml::Value::Integer(v)) => {
                return Err(ConfigError::Version {
                    found: (*v).clamp(0, u32::MAX as i64) as u32,
                })
            }
            Some(_) => return Err(ConfigError::Invalid("config_version must be an integer".into())),
        }
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.config_version != CONFIG_VERSION {
            return Err(ConfigError::Version {
                found: self.config_version,
            });
        }
        if self.model.seed != 0 || self.adversarial.seed != 0 || self.evaluation.seed != 0 {
            return Err(ConfigError::Invalid(
                "section seeds are derived from the top-level seed; set `seed` instead".into(),
            ));
        }
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.adversarial.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.translation.n_anchors == 0 {
            return Err(ConfigError::Invalid("translation.n_anchors must be positive".into()));
        }
        if self.evaluation.iterations < 2 {
            return Err(ConfigError::Invalid("evaluation.iterations must be at least 2".into()));
        }
        Ok(())
    }

    /// Model settings with the seed derived for one training run.
    pub fn model_for(&self, run: &str) -> ModelConfig {
        ModelConfig {
            seed: derive_seed(self.seed, &format!("model/{run}")),
            ..self.model.clone()
        }
    }

    pub fn adversarial_for(&self, run: &str) -> AdvConfig {
        AdvConfig {
            seed: derive_seed(self.seed, &format!("adversarial/{run}")),
            ..self.adversarial.clone()
        }
    }

    pub fn evaluation_settings(&self) -> EvalSettings {
        EvalSettings {
            seed: derive_seed(self.seed, "evaluation"),
            ..self.evaluation.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = PipelineConfig::from_toml("config_version = 1\nseed = 4\n[model]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.model.epochs, 3);
        assert_eq!(cfg.model.place_dim, 96);
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn version_gate() {
        assert!(matches!(
            PipelineConfig::from_toml("config_version = 2"),
            Err(ConfigError::Version { found: 2 })
        ));
        assert!(matches!(PipelineConfig::from_toml("seed = 1"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("config_version = 1\nsede = 1").is_err());
        assert!(PipelineConfig::from_toml("config_version = 1\n[model]\nepoch = 1").is_err());
    }

    #[test]
    fn section_seeds_are_derived() {
        assert!(PipelineConfig::from_toml("config_version = 1\n[model]\nseed = 5").is_err());
        let cfg = PipelineConfig {
            seed: 9,
            ..PipelineConfig::default()
        };
        assert_ne!(cfg.model_for("a").seed, cfg.model_for("b").seed);
        assert_eq!(cfg.model_for("a").seed, derive_seed(9, "model/a"));
    }
}
