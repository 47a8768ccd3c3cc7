//! Pipeline configuration file (TOML).

use std::path::Path;

use pitchpose_gbdt::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{AttributionTable, SplitSpec};
use crate::events::EventConfig;
use crate::features::FeatureSet;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config format version {found} is not supported (expected {CONFIG_FORMAT_VERSION})")]
    FormatVersion { found: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything a pipeline run depends on. `seed` is the single source of
/// randomness: `split.seed` and `train.seed` always follow it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub format_version: u32,
    pub seed: u64,
    pub feature_set: FeatureSet,
    pub events: EventConfig,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub attribution: AttributionTable,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            seed: 0,
            feature_set: FeatureSet::Full,
            events: EventConfig::default(),
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            attribution: AttributionTable::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self::default().normalized_seed(seed)
    }

    fn normalized_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.split.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn set_seed(&mut self, seed: u64) {
        *self = self.clone().normalized_seed(seed);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(ConfigError::FormatVersion {
                found: self.format_version,
            });
        }
        let e = &self.events;
        if e.window % 2 == 0 || e.window <= e.poly_order {
            return Err(ConfigError::Invalid(format!(
                "smoothing window {} must be odd and exceed order {}",
                e.window, e.poly_order
            )));
        }
        if !(e.release_angle < e.release_gate) {
            return Err(ConfigError::Invalid(
                "release threshold must be below the release gate".into(),
            ));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "train_fraction {} outside (0, 1)",
                self.split.train_fraction
            )));
        }
        self.train
            .validate()
            .map_err(|err| ConfigError::Invalid(err.to_string()))?;
        self.attribution
            .validate()
            .map_err(|err| ConfigError::Invalid(err.to_string()))?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        let seed = cfg.seed;
        let cfg = cfg.normalized_seed(seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// SHA-256 of the serialized config, hex encoded.
    pub fn hash(&self) -> String {
        let text = self.to_toml().expect("config always serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::with_seed(42);
        let text = cfg.to_toml().unwrap();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.to_toml().unwrap(), text);
        assert_eq!(back.train.seed, 42);
        assert_eq!(back.split.seed, 42);
    }

    #[test]
    fn defaults_carry_reference_values() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.events.ankle_height, 0.95);
        assert_eq!(cfg.events.ankle_velocity, -0.008);
        assert_eq!(cfg.events.release_angle, 30.0);
        assert_eq!(cfg.events.release_gate, 80.0);
        assert_eq!((cfg.events.window, cfg.events.poly_order), (21, 3));
        assert_eq!(cfg.train.rounds, 300);
        assert_eq!(cfg.train.max_depth, 12);
        assert_eq!(cfg.split.train_fraction, 0.8);
    }

    #[test]
    fn partial_file_fills_defaults_and_root_seed_wins() {
        let cfg = PipelineConfig::from_toml("seed = 7\n[train]\nrounds = 5\nseed = 99\n").unwrap();
        assert_eq!(cfg.train.rounds, 5);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.events, EventConfig::default());
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(PipelineConfig::from_toml("format_version = 2").is_err());
        assert!(PipelineConfig::from_toml("[events]\nwindow = 20").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::with_seed(1);
        let b = PipelineConfig::with_seed(2);
        assert_eq!(a.hash(), PipelineConfig::with_seed(1).hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
