//! Training the generator/critic pair: WGAN-GP losses, the epoch loop,
//! checkpointing, and sampling utilities for inspecting a trained model.

pub mod checkpoint;
pub mod grid;
pub mod losses;
pub mod run;
pub mod slerp;

use serde::{Deserialize, Serialize};

use crate::critic::CriticSpec;
use crate::error::config_err;
use crate::error::Result;
use crate::generator::GeneratorSpec;

pub use checkpoint::{restore, snapshot, Checkpoint, CHECKPOINT_VERSION};
pub use grid::{interpolation_strip, sample_grid, write_image_grid};
pub use losses::{
    critic_loss, generator_loss, gradient_penalty, CriticLossParts, GP_LEAF_NAME,
};
pub use run::{
    renorm_limits, resume_training, train, train_until, BEST_CHECKPOINT, LATEST_CHECKPOINT,
    METRICS_FILE,
};
pub use slerp::slerp;

/// Optimization hyperparameters. The defaults are the full training
/// recipe; tests and toy runs shrink them.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gp_lambda: f64,
    pub critic_iters_per_gen: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 1e-4,
            beta1: 0.0,
            beta2: 0.9,
            gp_lambda: 10.0,
            critic_iters_per_gen: 5,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(config_err!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(config_err!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.gp_lambda.is_finite() && self.gp_lambda > 0.0) {
            return Err(config_err!("gp_lambda must be positive, got {}", self.gp_lambda));
        }
        if self.critic_iters_per_gen == 0 {
            return Err(config_err!("critic_iters_per_gen must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(config_err!(
                "batch_size must be at least 2 (pairing and renorm need real batches), got {}",
                self.batch_size
            ));
        }
        Ok(())
    }
}

/// Everything a run needs; serialized verbatim into each checkpoint so a
/// model can be rebuilt from the file alone.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaganConfig {
    pub train: TrainConfig,
    pub generator: GeneratorSpec,
    pub critic: CriticSpec,
}

impl DaganConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.generator.validate()?;
        self.critic.validate()?;
        if self.generator.image_shape != self.critic.image_shape {
            return Err(config_err!(
                "generator and critic disagree on the image shape: {:?} vs {:?}",
                self.generator.image_shape,
                self.critic.image_shape
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| config_err!("bad config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| config_err!("config not serializable: {e}"))
    }
}

/// One row of `metrics.csv`. `gen_loss` is NaN for epochs in which no
/// generator step fell (fewer batches than `critic_iters_per_gen`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub critic_loss: f64,
    pub gen_loss: f64,
    pub wasserstein_estimate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: Option<u64>,
    pub best_val_wasserstein: Option<f64>,
}
