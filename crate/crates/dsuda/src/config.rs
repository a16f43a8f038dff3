//! Run configuration: a sectioned key=value file (TOML syntax) covering
//! preprocessing geometry, model widths, trainer settings, loss weights, and
//! the synthetic generator. Unknown keys are rejected, and every section has
//! documented defaults so an empty file is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LossWeights, ModelShape};
use crate::nn::OptimizerKind;
use crate::preprocess::PreprocessConfig;
use crate::synth::SynthConfig;
use crate::trainer::TrainConfig;

/// Model widths as configured; `input_len` always follows
/// `preprocess.target_points`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub latent: usize,
    pub decoder_hidden: usize,
    pub head_hidden: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let s = ModelShape::default();
        ModelSection {
            hidden: s.hidden,
            latent: s.latent,
            decoder_hidden: s.decoder_hidden,
            head_hidden: s.head_hidden,
        }
    }
}

/// Trainer settings as configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub lr_dae: f64,
    pub lr_suda: f64,
    pub steps_dae: usize,
    pub steps_suda: usize,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub adversarial_epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainerSection {
            lr_dae: t.lr_dae,
            lr_suda: t.lr_suda,
            steps_dae: t.steps_dae,
            steps_suda: t.steps_suda,
            batch_size: t.batch_size,
            pretrain_epochs: t.pretrain_epochs,
            adversarial_epochs: t.adversarial_epochs,
            seed: t.seed,
            optimizer: t.optimizer,
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preprocess: PreprocessConfig,
    pub model: ModelSection,
    pub trainer: TrainerSection,
    pub weights: LossWeights,
    pub synth: SynthConfig,
}

impl RunConfig {
    /// Parse and validate a configuration document.
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str(&text)
    }

    /// Validate every module's invariants before any computation starts.
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.model_shape().validate()?;
        self.train_config().validate()?;
        self.weights.validate()?;
        self.synth.validate()?;
        if self.synth.n_points != self.preprocess.target_points {
            return Err(Error::Config(format!(
                "synth.n_points ({}) must equal preprocess.target_points ({})",
                self.synth.n_points, self.preprocess.target_points
            )));
        }
        Ok(())
    }

    /// Model shape with the input length taken from the aligned trial length.
    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            input_len: self.preprocess.target_points,
            hidden: self.model.hidden,
            latent: self.model.latent,
            decoder_hidden: self.model.decoder_hidden,
            head_hidden: self.model.head_hidden,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr_dae: self.trainer.lr_dae,
            lr_suda: self.trainer.lr_suda,
            steps_dae: self.trainer.steps_dae,
            steps_suda: self.trainer.steps_suda,
            batch_size: self.trainer.batch_size,
            pretrain_epochs: self.trainer.pretrain_epochs,
            adversarial_epochs: self.trainer.adversarial_epochs,
            seed: self.trainer.seed,
            optimizer: self.trainer.optimizer,
            weights: self.weights,
        }
    }
}
