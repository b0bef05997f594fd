//! Training configuration: TOML-loadable, with every field defaulted so a
//! config file (or the CLI) only has to name what it changes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{OutcomeSpec, TimestepWeighting};
use crate::envs::ActionSpace;
use crate::error::{Error, Result};
use crate::nn::HeadSpec;

/// Default bins per action dimension when discretizing a continuous space.
/// Odd, so the center bin sits exactly on zero (a box space symmetric about
/// zero can then express "hold still" without rounding).
pub const DEFAULT_BINS: usize = 15;

/// Which action head the policy trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    /// Cross-entropy over discrete actions, or over a per-dimension
    /// discretization of a continuous space.
    Categorical {
        #[serde(default = "default_bins")]
        bins: usize,
    },
    /// Diagonal Gaussian with learned state-independent log-std.
    Gaussian,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl Default for HeadKind {
    fn default() -> Self {
        HeadKind::Categorical { bins: DEFAULT_BINS }
    }
}

impl HeadKind {
    /// Concrete head geometry for an action space.
    pub fn head_spec(&self, space: &ActionSpace) -> HeadSpec {
        match self {
            HeadKind::Categorical { bins } => space.categorical_head(*bins),
            HeadKind::Gaussian => space.gaussian_head(),
        }
    }
}

/// Everything that determines a training run besides the dataset itself.
/// The network depth is fixed at two hidden layers; capacity is varied
/// through `hidden_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub dropout_p: f64,
    pub batch_size: usize,
    /// Primary budget unit. Epoch-style accounting is available through
    /// [`epoch_length`](crate::train::epoch_length) when a run should be
    /// sized in dataset passes instead.
    pub total_gradient_steps: usize,
    /// `None` trains an unconditioned behavior-cloning policy.
    pub outcome: Option<OutcomeSpec>,
    pub head: HeadKind,
    pub seed: u64,
    /// Fraction of trajectories held out for validation loss.
    pub validation_fraction: f64,
    /// Gradient steps between metric checkpoints.
    pub eval_every: usize,
    /// Rollouts per metric checkpoint when a rollout evaluator is wired in;
    /// 0 keeps training strictly offline (the default).
    pub eval_rollouts: usize,
    pub weighting: TimestepWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_width: 256,
            learning_rate: 1e-3,
            dropout_p: 0.1,
            batch_size: 256,
            total_gradient_steps: 20_000,
            outcome: None,
            head: HeadKind::default(),
            seed: 0,
            validation_fraction: 0.2,
            eval_every: 1000,
            eval_rollouts: 0,
            weighting: TimestepWeighting::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width < 1 {
            return Err(Error::InvalidArgument("hidden_width must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::InvalidArgument(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.eval_every < 1 {
            return Err(Error::InvalidArgument("eval_every must be >= 1".into()));
        }
        if let HeadKind::Categorical { bins } = self.head {
            if bins < 2 {
                return Err(Error::InvalidArgument(format!(
                    "categorical head needs >= 2 bins, got {bins}"
                )));
            }
        }
        Ok(())
    }
}

/// Reads a [`TrainConfig`] from a TOML file. Unknown keys are rejected so a
/// typo cannot silently fall back to a default.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: TrainConfig = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        location: e
            .span()
            .map(|s| format!("byte {}", s.start))
            .unwrap_or_else(|| "unknown position".into()),
        message: e.message().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}
