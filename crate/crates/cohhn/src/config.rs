//! Run configuration: a TOML file with flat dotted keys, plus CLI
//! overrides.
//!
//! One [`RunConfig`] drives every command. All randomness flows from
//! the single top-level `seed`, and unknown keys are rejected so a
//! typo cannot silently fall back to a default. Commands copy the
//! effective config into their output directory, making each run
//! reproducible from that file alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnMap, PriceMode};
use crate::error::ConfigError;
use crate::model::train::TrainSettings;
use crate::model::Hyperparams;

/// Input/output locations and preprocessing knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw interaction log for `preprocess`.
    pub raw_csv: String,
    /// Directory holding the preprocessed dataset (written by
    /// `preprocess`, read by everything else).
    pub dataset_dir: String,
    pub columns: ColumnMap,
    /// Items appearing fewer times than this are dropped.
    pub min_item_count: usize,
    /// Sessions shorter than this are dropped.
    pub min_session_len: usize,
    /// Price discretization flavor.
    pub price_mode: PriceMode,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            raw_csv: String::new(),
            dataset_dir: "dataset".into(),
            columns: ColumnMap::default(),
            min_item_count: 10,
            min_session_len: 2,
            price_mode: PriceMode::Logistic,
        }
    }
}

/// Optimization knobs (the master seed lives on [`RunConfig`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Where `train` writes its checkpoint and history.
    pub output_dir: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 100,
            learning_rate: 0.001,
            output_dir: "runs/train".into(),
        }
    }
}

/// Evaluation knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Metric cutoffs.
    pub ks: Vec<usize>,
    /// Neighborhood size of the session-kNN baseline.
    pub k_neighbors: usize,
    /// Where `evaluate` writes its reports.
    pub output_dir: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![10, 20],
            k_neighbors: crate::baselines::DEFAULT_K_NEIGHBORS,
            output_dir: "runs/eval".into(),
        }
    }
}

/// Everything a command needs, parsed from TOML.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed: parameter initialization, epoch shuffling, and
    /// report metadata all derive from it.
    pub seed: u64,
    pub data: DataConfig,
    pub model: Hyperparams,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parse `path`, rejecting unreadable files, syntax errors, and
    /// unknown keys.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Cross-field checks beyond what parsing enforces.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        if self.eval.ks.is_empty() {
            return Err(ConfigError::Invalid("eval.ks must not be empty".into()));
        }
        if self.eval.ks.iter().any(|&k| k == 0) {
            return Err(ConfigError::Invalid("eval.ks entries must be positive".into()));
        }
        if self.eval.k_neighbors == 0 {
            return Err(ConfigError::Invalid(
                "eval.k_neighbors must be positive".into(),
            ));
        }
        if self.train.batch_size == 0 {
            return Err(ConfigError::Invalid(
                "train.batch_size must be positive".into(),
            ));
        }
        if !(self.train.learning_rate.is_finite() && self.train.learning_rate >= 0.0) {
            return Err(ConfigError::Invalid(format!(
                "train.learning_rate must be a non-negative number, got {}",
                self.train.learning_rate
            )));
        }
        Ok(())
    }

    /// The [`TrainSettings`] this config implies.
    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            seed: self.seed,
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        PathBuf::from(&self.data.dataset_dir)
    }

    /// Serialize back to TOML (used to copy the effective config into
    /// output directories).
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configs serialize")
    }

    /// Write the effective config into `dir` as `config.toml`.
    pub fn save_into(&self, dir: &Path) -> Result<(), ConfigError> {
        std::fs::create_dir_all(dir).map_err(|source| ConfigError::Unreadable {
            path: dir.display().to_string(),
            source,
        })?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()).map_err(|source| ConfigError::Unreadable {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ablation;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn full_file_round_trips() {
        let config = RunConfig {
            seed: 7,
            data: DataConfig {
                raw_csv: "raw.csv".into(),
                dataset_dir: "out/data".into(),
                min_item_count: 3,
                ..DataConfig::default()
            },
            model: Hyperparams {
                embedding_dim: 32,
                heads: 2,
                price_levels: 5,
                rounds: 3,
                ablation: Ablation {
                    no_coguide: true,
                    ..Ablation::default()
                },
                ..Hyperparams::default()
            },
            train: TrainConfig {
                epochs: 12,
                learning_rate: 0.01,
                ..TrainConfig::default()
            },
            eval: EvalConfig {
                ks: vec![5, 10, 20],
                ..EvalConfig::default()
            },
        };
        let text = config.to_toml();
        let parsed: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn dotted_keys_parse() {
        let text = r#"
            seed = 3
            data.raw_csv = "log.csv"
            data.columns.item = "product_id"
            model.embedding_dim = 16
            model.heads = 2
            model.ablation.no_price = true
            train.epochs = 2
            eval.ks = [10, 20]
        "#;
        let config: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(config.seed, 3);
        assert_eq!(config.data.columns.item, "product_id");
        assert!(config.model.ablation.no_price);
        assert_eq!(config.train.epochs, 2);
        // Untouched keys keep their defaults.
        assert_eq!(config.train.batch_size, 100);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("sed = 3").unwrap_err();
        assert!(err.to_string().contains("sed"), "{err}");
        assert!(toml::from_str::<RunConfig>("model.embeding_dim = 8").is_err());
        assert!(toml::from_str::<RunConfig>("data.columns.items = \"x\"").is_err());
    }

    #[test]
    fn bad_values_fail_validation() {
        let mut config = RunConfig::default();
        config.eval.ks.clear();
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.model.heads = 3; // 3 ∤ 128
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.train.learning_rate = f64::NAN;
        assert!(config.validate().is_err());
    }

    #[test]
    fn train_settings_take_the_master_seed() {
        let config = RunConfig {
            seed: 99,
            ..RunConfig::default()
        };
        assert_eq!(config.train_settings().seed, 99);
    }
}
