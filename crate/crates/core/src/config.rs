//! Run configuration: one TOML file with a section per component and a
//! single master seed from which every random stream is derived.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{NetworkConfig, TemporalConfig};
use crate::spatial::SpatialHyper;
use crate::synthdata::SynthConfig;
use crate::temporal::TemporalHyper;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Smoothing window in frames.
    pub window: usize,
    /// Smoothing stride; equal to `window` for tumbling windows.
    pub stride: usize,
    /// The last this-many generated videos are held out for evaluation.
    pub test_videos: usize,
    /// Labeled-domain samples drawn for held-out frame-level scoring.
    pub heldout_count: usize,
    /// Number of seeds in the ablation table (master seed, master + 1, ...).
    pub ablation_seeds: usize,
    /// Labeled-pool multiplier for the enlarged-pool row.
    pub enlarge_factor: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { window: 30, stride: 30, test_videos: 12, heldout_count: 2000, ablation_seeds: 5, enlarge_factor: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { out_dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub network: NetworkConfig,
    pub temporal: TemporalConfig,
    pub spatial: SpatialHyper,
    pub temporal_train: TemporalHyper,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {}", path.display(), msg)),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.network.validate()?;
        self.temporal.validate()?;
        self.spatial.validate()?;
        self.temporal_train.validate(&self.temporal)?;
        if self.network.input_dim != self.synth.feature_dim || self.network.num_classes != self.synth.num_classes {
            return Err(Error::Config(format!(
                "network ({} inputs, {} classes) disagrees with synth ({} features, {} classes)",
                self.network.input_dim, self.network.num_classes, self.synth.feature_dim, self.synth.num_classes
            )));
        }
        if self.eval.window < 1 || self.eval.stride < 1 {
            return Err(Error::Config("eval.window and eval.stride must be >= 1".into()));
        }
        if self.eval.test_videos >= self.synth.video.num_videos {
            return Err(Error::Config("eval.test_videos must leave at least one training video".into()));
        }
        if self.eval.enlarge_factor < 1 || self.eval.ablation_seeds < 1 {
            return Err(Error::Config("eval.enlarge_factor and eval.ablation_seeds must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert!(text.contains("[spatial]") && text.contains("[temporal_train]") && text.contains("[eval]"));
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = RunConfig::from_toml("seed = 9\n[spatial]\ntotal_steps = 10\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.spatial.total_steps, 10);
        assert_eq!(cfg.spatial.eta_t, 1e-2);
    }

    #[test]
    fn rejects_unknown_keys_and_inconsistency() {
        assert!(RunConfig::from_toml("sed = 1\n").is_err());
        assert!(RunConfig::from_toml("[network]\nnum_classes = 5\n").is_err());
        assert!(RunConfig::from_toml("[spatial]\neta_s = 0.0\n").is_err());
    }
}
