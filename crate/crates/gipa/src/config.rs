//! Declarative TOML run configuration with full schema validation,
//! per-field defaults and command-line overrides.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::encode::BucketMethod;
use crate::error::{GipaError, Result};
use crate::layer::{Ablation, AttentionKind};
use crate::optim::AdamSettings;
use crate::synthetic::SyntheticSpec;

pub const MAX_LAYERS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Stacked layer count, 1 through 6.
    pub layers: usize,
    /// Dense-path width `n`.
    pub dense_width: usize,
    /// Embedded edge width.
    pub edge_width: usize,
    /// Hidden width of all internal MLPs.
    pub hidden: usize,
    /// Buckets per node feature.
    pub buckets: usize,
    pub bucket_method: BucketMethod,
    pub activation: AttentionKind,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            layers: 2,
            dense_width: 16,
            edge_width: 4,
            hidden: 16,
            buckets: 6,
            bucket_method: BucketMethod::EqualFrequency,
            activation: AttentionKind::Softplus,
            ablation: Ablation::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub max_epochs: usize,
    /// Stop after this many evaluations without a validation improvement.
    pub patience: usize,
    /// Evaluate every this many epochs.
    pub eval_interval: usize,
    /// Random node partitions per epoch; 1 trains on the whole graph.
    pub partitions: usize,
    pub seed: u64,
    /// Seed list for `ablate` sweeps.
    pub seeds: Vec<u64>,
}

impl Default for TrainingConfig {
    fn default() -> TrainingConfig {
        TrainingConfig {
            max_epochs: 200,
            patience: 50,
            eval_interval: 5,
            partitions: 1,
            seed: 1,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory; absent means commands must generate their input.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optimizer: AdamSettings,
    pub training: TrainingConfig,
    pub data: DataConfig,
    pub synthetic: SyntheticSpec,
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GipaError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: TrainConfig = toml::from_str(&text)
            .map_err(|e| GipaError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.layers == 0 || m.layers > MAX_LAYERS {
            return Err(GipaError::Config(format!(
                "model.layers is {}, supported range is 1..={MAX_LAYERS}",
                m.layers
            )));
        }
        for (name, v) in [
            ("model.dense_width", m.dense_width),
            ("model.edge_width", m.edge_width),
            ("model.hidden", m.hidden),
        ] {
            if v == 0 {
                return Err(GipaError::Config(format!("{name} must be at least 1")));
            }
        }
        if m.buckets < 2 {
            return Err(GipaError::Config(format!(
                "model.buckets is {}, at least 2 required",
                m.buckets
            )));
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || !o.learning_rate.is_finite() {
            return Err(GipaError::Config("optimizer.learning_rate must be positive".to_string()));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(GipaError::Config("optimizer betas must lie in [0, 1)".to_string()));
        }
        if !(o.epsilon > 0.0) || o.weight_decay < 0.0 {
            return Err(GipaError::Config(
                "optimizer.epsilon must be positive and weight_decay non-negative".to_string(),
            ));
        }
        let t = &self.training;
        for (name, v) in [
            ("training.max_epochs", t.max_epochs),
            ("training.patience", t.patience),
            ("training.eval_interval", t.eval_interval),
            ("training.partitions", t.partitions),
        ] {
            if v == 0 {
                return Err(GipaError::Config(format!("{name} must be at least 1")));
            }
        }
        if t.seeds.is_empty() {
            return Err(GipaError::Config("training.seeds must not be empty".to_string()));
        }
        Ok(())
    }

    /// Apply command-line overrides on top of the file values.
    pub fn apply_flags(
        &mut self,
        seed: Option<u64>,
        ablation: Option<Ablation>,
        layers: Option<usize>,
        activation: Option<AttentionKind>,
    ) {
        if let Some(s) = seed {
            self.training.seed = s;
            self.synthetic.seed = s;
        }
        if let Some(a) = ablation {
            self.model.ablation = a;
        }
        if let Some(k) = layers {
            self.model.layers = k;
        }
        if let Some(a) = activation {
            self.model.activation = a;
        }
    }

    /// The effective configuration as a TOML document.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| GipaError::Serde(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = TrainConfig::default();
        config.validate().unwrap();
        let text = config.to_toml().unwrap();
        let back: TrainConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_file_fills_remaining_defaults() {
        let config: TrainConfig =
            toml::from_str("[model]\nlayers = 3\n\n[optimizer]\nlearning_rate = 0.05\n").unwrap();
        assert_eq!(config.model.layers, 3);
        assert_eq!(config.model.dense_width, 16);
        assert_eq!(config.optimizer.learning_rate, 0.05);
        assert_eq!(config.optimizer.beta1, 0.9);
        assert_eq!(config.training.patience, 50);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<TrainConfig>("[model]\nlayer_count = 3\n");
        let msg = format!("{}", err.unwrap_err());
        assert!(msg.contains("layer_count"), "{msg}");
        assert!(toml::from_str::<TrainConfig>("[stuff]\nx = 1\n").is_err());
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        let mut config = TrainConfig::default();
        config.model.layers = 7;
        assert!(matches!(config.validate(), Err(GipaError::Config(_))));
        config.model.layers = 0;
        assert!(matches!(config.validate(), Err(GipaError::Config(_))));

        let mut config = TrainConfig::default();
        config.optimizer.learning_rate = 0.0;
        assert!(config.validate().is_err());

        let mut config = TrainConfig::default();
        config.model.buckets = 1;
        assert!(config.validate().is_err());

        let mut config = TrainConfig::default();
        config.training.eval_interval = 0;
        assert!(config.validate().is_err());

        let mut config = TrainConfig::default();
        config.training.seeds.clear();
        assert!(config.validate().is_err());
    }

    #[test]
    fn flags_override_only_their_fields() {
        let mut config = TrainConfig::default();
        config.apply_flags(Some(99), Some(Ablation::NoBitwise), Some(4), None);
        assert_eq!(config.training.seed, 99);
        assert_eq!(config.synthetic.seed, 99);
        assert_eq!(config.model.ablation, Ablation::NoBitwise);
        assert_eq!(config.model.layers, 4);
        assert_eq!(config.model.activation, AttentionKind::Softplus);
        assert_eq!(config.model.dense_width, ModelConfig::default().dense_width);
    }

    #[test]
    fn file_loading_reports_syntax_and_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[model\nlayers = 2").unwrap();
        assert!(matches!(TrainConfig::load(&path), Err(GipaError::Config(_))));
        std::fs::write(&path, "[model]\nlayers = 9\n").unwrap();
        assert!(matches!(TrainConfig::load(&path), Err(GipaError::Config(_))));
        std::fs::write(&path, "[model]\nlayers = 4\n").unwrap();
        assert_eq!(TrainConfig::load(&path).unwrap().model.layers, 4);
        assert!(matches!(TrainConfig::load(&dir.path().join("absent.toml")), Err(GipaError::Config(_))));
    }
}
