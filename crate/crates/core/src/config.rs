//! Run configuration, read from TOML. Every field has a default, and the echo written
//! next to a run's outputs spells all of them out.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::error::{LdganError, Result};
use crate::lda::DEFAULT_EPSILON;
use crate::net::{Activation, RmsPropConfig};
use crate::train::BalancingScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub rho: f64,
    pub epsilon: f64,
    pub generator_lr: f64,
    pub extractor_lr: f64,
    pub critic_lr: f64,
    pub wgan_generator_lr: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            rho: 0.9,
            epsilon: 1e-8,
            generator_lr: 1e-3,
            extractor_lr: 1e-3,
            critic_lr: 5e-5,
            wgan_generator_lr: 5e-5,
        }
    }
}

impl OptimizerConfig {
    pub fn rmsprop(&self, learning_rate: f64) -> RmsPropConfig {
        RmsPropConfig {
            rho: self.rho,
            learning_rate,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WganConfig {
    pub clip: f64,
    pub critic_steps: usize,
    pub generator_steps: usize,
}

impl Default for WganConfig {
    fn default() -> Self {
        WganConfig {
            clip: 0.01,
            critic_steps: 5,
            generator_steps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub per_class: usize,
    pub learning_rate: f64,
    /// Kept tiny: the regularizer's absolute `+1` term is not small next to the
    /// scatter of freshly initialized features.
    pub epsilon: f64,
    pub feature_dim: usize,
    pub hidden: usize,
    /// Generated samples per class drawn by the `probe` command.
    pub samples_per_class: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            iterations: 200,
            per_class: 32,
            learning_rate: 1e-3,
            epsilon: 1e-13,
            feature_dim: 8,
            hidden: 32,
            samples_per_class: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub iterations: usize,
    /// Samples per source per minibatch (split evenly across classes when conditional).
    pub batch_size: usize,
    pub eta: f64,
    pub epsilon: f64,
    pub feature_dim: usize,
    pub z_dim: usize,
    pub hidden: usize,
    pub generator_head: Activation,
    /// Size of the pre-drawn synthetic dataset minibatches are sampled from.
    pub dataset_size: usize,
    /// Real classes used in conditional training; defaults to every dataset class.
    pub real_classes: Option<usize>,
    /// Generated classes in conditional training; defaults to `real_classes`.
    pub generated_classes: Option<usize>,
    /// Write network checkpoints every this many iterations (0 = final only).
    pub checkpoint_every: usize,
    /// Record elapsed time in metrics. Off by default so reruns are byte-identical.
    pub record_wall_time: bool,
    /// Update scheme of the unsupervised trainer.
    pub scheme: BalancingScheme,
    /// Update scheme of the conditional trainer; must be fixed.
    pub conditional_scheme: BalancingScheme,
    pub optimizer: OptimizerConfig,
    pub wgan: WganConfig,
    pub probe: ProbeConfig,
    pub dataset: DatasetSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            iterations: 2000,
            batch_size: 64,
            eta: 0.9,
            epsilon: DEFAULT_EPSILON,
            feature_dim: 8,
            z_dim: 8,
            hidden: 32,
            generator_head: Activation::Identity,
            dataset_size: 10_000,
            real_classes: None,
            generated_classes: None,
            checkpoint_every: 0,
            record_wall_time: false,
            scheme: BalancingScheme::default(),
            conditional_scheme: BalancingScheme::fixed(2, 2),
            optimizer: OptimizerConfig::default(),
            wgan: WganConfig::default(),
            probe: ProbeConfig::default(),
            dataset: DatasetSpec::gaussian(vec![2.0, -1.0], 0.25),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| LdganError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        TrainConfig::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Full TOML rendering with every default filled in.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LdganError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LdganError::Config(m.to_string()));
        if self.batch_size == 0 || self.feature_dim == 0 || self.z_dim == 0 || self.hidden == 0 {
            return bad("batch_size, feature_dim, z_dim and hidden must be positive");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.wgan.clip > 0.0) {
            return bad("wgan.clip must be positive");
        }
        if self.wgan.critic_steps == 0 || self.wgan.generator_steps == 0 {
            return bad("wgan step counts must be at least 1");
        }
        if self.real_classes == Some(0) || self.generated_classes == Some(0) {
            return bad("class counts must be positive");
        }
        if self.dataset_size == 0 {
            return bad("dataset_size must be positive");
        }
        for scheme in [&self.scheme, &self.conditional_scheme] {
            scheme
                .validate()
                .map_err(|e| LdganError::Config(e.to_string()))?;
        }
        self.dataset
            .validate()
            .map_err(|e| LdganError::Config(e.to_string()))?;
        let o = &self.optimizer;
        if !(o.rho >= 0.0 && o.rho < 1.0) || !(o.epsilon > 0.0) {
            return bad("optimizer.rho must lie in [0, 1) and optimizer.epsilon be positive");
        }
        Ok(())
    }
}
