//! Experiment configuration: one JSON document drives every command.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::synth::SynthConfig;
use crate::fusion::FusionKind;
use crate::model::ModelConfig;
use crate::optim::{OptimKind, StepLr, DEFAULT_WEIGHT_DECAY};
use crate::preprocess::FitPolicy;
use crate::ModalitySet;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratio: 0.6, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub channels: usize,
    pub tokens: usize,
    pub token_dim: usize,
    pub vocab: usize,
    pub modalities: ModalitySet,
    pub fusion: FusionKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            channels: 64,
            tokens: 8,
            token_dim: 8,
            vocab: 4096,
            modalities: ModalitySet::ALL,
            fusion: FusionKind::Thoam,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimSection {
    pub kind: OptimKind,
    pub lr0: f64,
    pub weight_decay: f64,
    /// SGD momentum; ignored by AdamW.
    pub momentum: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl Default for OptimSection {
    fn default() -> Self {
        OptimSection {
            kind: OptimKind::AdamW,
            lr0: 1e-3,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            momentum: 0.0,
            milestones: vec![30, 60, 90],
            factor: 0.3,
        }
    }
}

/// Visual-only augmentation switches; the tabular and linguistic modalities
/// are never augmented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub hflip: bool,
    pub vflip: bool,
    /// Rotations restricted to 90-degree multiples (interpolation-free).
    pub rot90: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            hflip: true,
            vflip: true,
            rot90: true,
        }
    }
}

/// Full experiment configuration. Every field has a default, so a config
/// file only needs the overrides; the resolved document is persisted next
/// to the results of each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Dataset directory containing `manifest.jsonl` and `images/`.
    pub dataset: PathBuf,
    /// Output directory for run artifacts.
    pub out: PathBuf,
    /// Global seed: model initialization, batch order, augmentation, and
    /// dataset generation all derive from it.
    pub seed: u64,
    pub split: SplitConfig,
    pub model: ModelSection,
    pub optimizer: OptimSection,
    pub epochs: usize,
    pub batch_size: usize,
    pub augment: AugmentConfig,
    pub fit_policy: FitPolicy,
    /// Synthetic generator settings used by the generate command (its seed
    /// is taken from the global `seed`).
    pub synth: SynthConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::from("data/default"),
            out: PathBuf::from("runs/default"),
            seed: 7,
            split: SplitConfig::default(),
            model: ModelSection::default(),
            optimizer: OptimSection::default(),
            epochs: 100,
            batch_size: 32,
            augment: AugmentConfig::default(),
            fit_policy: FitPolicy::TrainOnly,
            synth: SynthConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| {
            HarnessError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            HarnessError::Validation(format!("bad config {}: {e}", path.display()))
        })
    }

    pub fn apply(mut self, overrides: &Overrides) -> Self {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.out = out.clone();
        }
        if let Some(dataset) = &overrides.dataset {
            self.dataset = dataset.clone();
        }
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Validation(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return bad(format!(
                "split.ratio must lie strictly between 0 and 1, got {}",
                self.split.ratio
            ));
        }
        if !(self.optimizer.lr0 > 0.0) {
            return bad(format!("optimizer.lr0 must be positive, got {}", self.optimizer.lr0));
        }
        if !(self.optimizer.factor > 0.0 && self.optimizer.factor <= 1.0) {
            return bad(format!(
                "optimizer.factor must lie in (0, 1], got {}",
                self.optimizer.factor
            ));
        }
        if self.optimizer.weight_decay < 0.0 {
            return bad("optimizer.weight_decay must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.optimizer.momentum) {
            return bad("optimizer.momentum must lie in [0, 1)".into());
        }
        self.model_config().validate().map_err(|e| HarnessError::Validation(e.to_string()))?;
        self.synth.validate().map_err(HarnessError::Validation)?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            channels: self.model.channels,
            tokens: self.model.tokens,
            token_dim: self.model.token_dim,
            vocab: self.model.vocab,
            modalities: self.model.modalities,
            fusion: self.model.fusion,
        }
    }

    pub fn schedule(&self) -> StepLr {
        StepLr::new(
            self.optimizer.lr0,
            self.optimizer.factor,
            self.optimizer.milestones.clone(),
        )
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dataset.join("manifest.jsonl")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"seed": 11, "model": {"channels": 32, "tokens": 4, "token_dim": 8}}"#)
                .unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.model.channels, 32);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.batch_size, 32);
        cfg.validate().unwrap();
    }

    #[test]
    fn overrides_take_precedence() {
        let cfg = ExperimentConfig::default().apply(&Overrides {
            seed: Some(99),
            out: Some(PathBuf::from("elsewhere")),
            dataset: None,
        });
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.out, PathBuf::from("elsewhere"));
        assert_eq!(cfg.dataset, PathBuf::from("data/default"));
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut cfg = ExperimentConfig::default();
        cfg.split.ratio = 1.0;
        assert!(matches!(cfg.validate(), Err(HarnessError::Validation(_))));
        let mut cfg = ExperimentConfig::default();
        cfg.model.token_dim = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
    }
}
