//! The deterministic training loop: split, relabel, batch, descend.
//!
//! Reproducibility contract: `(dataset, config)` fully determines every
//! parameter and every logged number. One ChaCha stream (derived from the
//! config seed) is threaded through batch sampling, dropout, and any
//! mid-training rollouts; checkpoints record its word position, so a resumed
//! run replays the identical randomness an uninterrupted run would have
//! consumed.

use crate::data::{
    dataset_content_hash, split_indices, split_train_validation, BatchSampler, Dataset,
    TrainingExample,
};
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Matrix, MlpPolicy};
use crate::rng::{stream, RvsRng};

use super::checkpoint::PolicyArtifact;
use super::config::TrainConfig;
use super::metrics::{MetricsLog, MetricsRecord};

/// Examples in each fixed metrics batch. Train and validation losses are
/// measured in inference mode on one batch apiece, drawn once per run from
/// a dedicated stream, so the two curves are comparable and a resumed run
/// re-derives the identical batches.
pub const METRICS_BATCH: usize = 1024;

/// Called at every metric checkpoint with a resumable snapshot; the run
/// driver uses it to persist checkpoints, so an abort retains the last good
/// one on disk.
pub type CheckpointObserver<'a> = &'a mut dyn FnMut(&PolicyArtifact, &MetricsRecord) -> Result<()>;

/// Optional mid-training rollout evaluation, fed from the training stream;
/// returns `(mean_return, success_fraction)`.
pub type RolloutEvaluator<'a> =
    &'a mut dyn FnMut(&PolicyArtifact, &mut RvsRng) -> Result<(f64, f64)>;

/// Everything a finished (or aborted-and-resumed) run hands back.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub artifact: PolicyArtifact,
    pub metrics: MetricsLog,
    /// Original-dataset indices of trajectories that fed at least one
    /// gradient batch in this run.
    pub gradient_trajectories: Vec<usize>,
    /// Original-dataset indices held out for validation. Disjoint from
    /// `gradient_trajectories` by construction; exposed so that can be
    /// audited rather than trusted.
    pub validation_trajectories: Vec<usize>,
}

/// Trains from scratch. See [`train_with`] to observe checkpoints.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    run_training(dataset, config, None, None, None)
}

/// Trains from scratch with checkpoint/rollout hooks.
pub fn train_with(
    dataset: &Dataset,
    config: &TrainConfig,
    observer: Option<CheckpointObserver>,
    evaluator: Option<RolloutEvaluator>,
) -> Result<TrainOutput> {
    run_training(dataset, config, None, observer, evaluator)
}

/// Continues a checkpointed run to its configured step budget. The result
/// is bit-identical to never having stopped, provided the same dataset is
/// supplied; a dataset with a different content hash gets a warning (the
/// artifact may legitimately outlive a regenerated data file).
pub fn resume_training(
    dataset: &Dataset,
    artifact: &PolicyArtifact,
    observer: Option<CheckpointObserver>,
    evaluator: Option<RolloutEvaluator>,
) -> Result<TrainOutput> {
    run_training(dataset, &artifact.config, Some(artifact), observer, evaluator)
}

/// Stacks examples into network input and action-target matrices. Input
/// rows are the state with the condition vector appended.
pub(crate) fn examples_to_matrices(
    examples: &[TrainingExample],
    input_dim: usize,
    action_dim: usize,
) -> Result<(Matrix, Matrix)> {
    let mut x = Matrix::zeros(examples.len(), input_dim);
    let mut a = Matrix::zeros(examples.len(), action_dim);
    for (i, ex) in examples.iter().enumerate() {
        if ex.state.len() + ex.condition.len() != input_dim {
            return Err(Error::ShapeMismatch(format!(
                "example {} has state {} + condition {} != input {}",
                i,
                ex.state.len(),
                ex.condition.len(),
                input_dim
            )));
        }
        if ex.action.len() != action_dim {
            return Err(Error::ShapeMismatch(format!(
                "example {} has action dim {} != {}",
                i,
                ex.action.len(),
                action_dim
            )));
        }
        let row = x.row_mut(i);
        row[..ex.state.len()].copy_from_slice(&ex.state);
        row[ex.state.len()..].copy_from_slice(&ex.condition);
        a.row_mut(i).copy_from_slice(&ex.action);
    }
    Ok((x, a))
}

/// Fixed inference-mode batches behind the train/validation loss columns.
struct FixedBatches {
    x_train: Matrix,
    a_train: Matrix,
    x_val: Matrix,
    a_val: Matrix,
}

/// The immutable parts of a checkpoint snapshot.
struct SnapshotParts<'a> {
    config: &'a TrainConfig,
    env_id: &'a str,
    state_dim: usize,
    condition_dim: usize,
    dataset_hash: &'a str,
    norm_bounds: Option<(f64, f64)>,
}

impl SnapshotParts<'_> {
    fn snapshot(
        &self,
        policy: &MlpPolicy,
        adam: &AdamState,
        steps_done: usize,
        rng_word_pos: u128,
    ) -> PolicyArtifact {
        PolicyArtifact {
            policy: policy.clone(),
            config: self.config.clone(),
            env_id: self.env_id.to_string(),
            state_dim: self.state_dim,
            condition_dim: self.condition_dim,
            dataset_hash: self.dataset_hash.to_string(),
            norm_bounds: self.norm_bounds,
            adam: adam.clone(),
            steps_done,
            rng_word_pos,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn checkpoint_tick(
    step: usize,
    policy: &MlpPolicy,
    adam: &AdamState,
    rng: &mut RvsRng,
    fixed: &FixedBatches,
    parts: &SnapshotParts<'_>,
    metrics: &mut MetricsLog,
    observer: &mut Option<CheckpointObserver<'_>>,
    evaluator: &mut Option<RolloutEvaluator<'_>>,
) -> Result<()> {
    let train_loss = policy.eval_loss(&fixed.x_train, &fixed.a_train)?;
    let val_loss = policy.eval_loss(&fixed.x_val, &fixed.a_val)?;
    let (eval_return, eval_success) = match evaluator {
        Some(ev) => {
            let snap = parts.snapshot(policy, adam, step, rng.get_word_pos());
            let (ret, succ) = ev(&snap, rng)?;
            (Some(ret), Some(succ))
        }
        None => (None, None),
    };
    let record = MetricsRecord {
        step,
        train_loss,
        val_loss,
        eval_return,
        eval_success,
    };
    metrics.push(record.clone())?;
    if let Some(obs) = observer {
        // Word position is taken after any rollouts so resuming from this
        // snapshot continues the stream exactly where this run left it.
        let snap = parts.snapshot(policy, adam, step, rng.get_word_pos());
        obs(&snap, &record)?;
    }
    Ok(())
}

fn run_training(
    dataset: &Dataset,
    config: &TrainConfig,
    start: Option<&PolicyArtifact>,
    mut observer: Option<CheckpointObserver<'_>>,
    mut evaluator: Option<RolloutEvaluator<'_>>,
) -> Result<TrainOutput> {
    config.validate()?;
    dataset.validate()?;
    let env = make_env(&dataset.env_id)?;
    let espec = env.spec();
    if dataset.state_dim() != espec.state_dim {
        return Err(Error::InvalidArgument(format!(
            "dataset state dim {} != {} of environment {}",
            dataset.state_dim(),
            espec.state_dim,
            espec.env_id
        )));
    }
    if dataset.horizon_h != espec.horizon_h {
        return Err(Error::InvalidArgument(format!(
            "dataset horizon {} != {} of environment {}",
            dataset.horizon_h, espec.horizon_h, espec.env_id
        )));
    }
    if dataset.action_dim() != espec.action_space.action_dim() {
        return Err(Error::InvalidArgument(format!(
            "dataset action dim {} != {} of environment {}",
            dataset.action_dim(),
            espec.action_space.action_dim(),
            espec.env_id
        )));
    }

    let dataset_hash = dataset_content_hash(dataset)?;
    let train_fraction = 1.0 - config.validation_fraction;
    let (train_ds, val_ds) = split_train_validation(dataset, train_fraction, config.seed)?;
    let (train_idx, val_idx) =
        split_indices(dataset.trajectories.len(), train_fraction, config.seed)?;
    let train_sampler =
        BatchSampler::new(&train_ds, config.outcome.clone(), config.weighting)?;
    let norm_bounds = train_sampler.norm_bounds();
    // The validation sampler conditions through the training split's
    // normalization scale so its loss is measured in the same units.
    let val_sampler = BatchSampler::with_bounds(
        &val_ds,
        config.outcome.clone(),
        config.weighting,
        norm_bounds,
    )?;

    let condition_dim = train_sampler.condition_dim();
    let state_dim = dataset.state_dim();
    let input_dim = state_dim + condition_dim;
    let action_dim = dataset.action_dim();
    let head_spec = config.head.head_spec(&espec.action_space);

    let mut policy;
    let mut adam;
    let start_step;
    let mut rng = stream(config.seed, "train", 0);
    match start {
        None => {
            policy = MlpPolicy::init(
                input_dim,
                config.hidden_width,
                head_spec,
                config.dropout_p,
                config.seed,
            )?;
            adam = AdamState::new_for(&policy);
            start_step = 0;
        }
        Some(artifact) => {
            if artifact.policy.input_dim != input_dim
                || artifact.state_dim != state_dim
                || artifact.condition_dim != condition_dim
                || artifact.env_id != dataset.env_id
            {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint geometry ({}, {}+{}) does not fit this dataset ({}, {}+{})",
                    artifact.env_id,
                    artifact.state_dim,
                    artifact.condition_dim,
                    dataset.env_id,
                    state_dim,
                    condition_dim
                )));
            }
            if artifact.steps_done > config.total_gradient_steps {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint is at step {} but the budget is {}",
                    artifact.steps_done, config.total_gradient_steps
                )));
            }
            if artifact.dataset_hash != dataset_hash {
                eprintln!(
                    "warning: dataset hash {} differs from the checkpoint's {}; resuming anyway",
                    &dataset_hash[..12.min(dataset_hash.len())],
                    &artifact.dataset_hash[..12.min(artifact.dataset_hash.len())]
                );
            }
            policy = artifact.policy.clone();
            adam = artifact.adam.clone();
            start_step = artifact.steps_done;
            rng.set_word_pos(artifact.rng_word_pos);
        }
    }

    // Fixed metrics batches come from their own stream: checkpoint cadence
    // must not perturb the training randomness.
    let mut metrics_rng = stream(config.seed, "metrics", 0);
    let train_probe = train_sampler.batch(METRICS_BATCH, &mut metrics_rng);
    let val_probe = val_sampler.batch(METRICS_BATCH, &mut metrics_rng);
    let (x_train, a_train) = examples_to_matrices(&train_probe, input_dim, action_dim)?;
    let (x_val, a_val) = examples_to_matrices(&val_probe, input_dim, action_dim)?;
    let fixed = FixedBatches {
        x_train,
        a_train,
        x_val,
        a_val,
    };
    let parts = SnapshotParts {
        config,
        env_id: &dataset.env_id,
        state_dim,
        condition_dim,
        dataset_hash: &dataset_hash,
        norm_bounds,
    };

    let mut metrics = MetricsLog::new();
    let mut fed_gradients = vec![false; train_ds.trajectories.len()];
    checkpoint_tick(
        start_step,
        &policy,
        &adam,
        &mut rng,
        &fixed,
        &parts,
        &mut metrics,
        &mut observer,
        &mut evaluator,
    )?;

    let total = config.total_gradient_steps;
    for step in (start_step + 1)..=total {
        let batch = train_sampler.batch(config.batch_size, &mut rng);
        for ex in &batch {
            fed_gradients[ex.traj_index] = true;
        }
        let (x, a) = examples_to_matrices(&batch, input_dim, action_dim)?;
        let at_step = |e: Error| match e {
            Error::Numeric(m) => Error::Numeric(format!("gradient step {step}: {m}")),
            other => other,
        };
        let (loss, grads, _clamped) = policy.loss_and_grad(&x, &a, &mut rng).map_err(at_step)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "gradient step {step}: loss became {loss}; aborting before the update \
                 (the last checkpoint written is still good)"
            )));
        }
        adam_step(&mut policy, &grads, &mut adam, config.learning_rate).map_err(at_step)?;
        if step % config.eval_every == 0 || step == total {
            checkpoint_tick(
                step,
                &policy,
                &adam,
                &mut rng,
                &fixed,
                &parts,
                &mut metrics,
                &mut observer,
                &mut evaluator,
            )?;
        }
    }

    let artifact = parts.snapshot(&policy, &adam, total, rng.get_word_pos());
    let gradient_trajectories: Vec<usize> = fed_gradients
        .iter()
        .enumerate()
        .filter(|(_, &fed)| fed)
        .map(|(i, _)| train_idx[i])
        .collect();
    Ok(TrainOutput {
        artifact,
        metrics,
        gradient_trajectories,
        validation_trajectories: val_idx,
    })
}

/// How many gradient steps make one "epoch" for budget accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochConvention {
    /// One pass over every (start, goal) timestep pair: `N * C(H, 2)`.
    PairCount,
    /// A fixed external constant (cross-suite comparability), e.g.
    /// [`FIXED_EPOCH_LENGTH`].
    Fixed(usize),
}

/// The fixed-convention default: `2000 * C(50, 2)` examples.
pub const FIXED_EPOCH_LENGTH: usize = 2_450_000;

/// Examples per epoch for a dataset under the chosen convention.
pub fn epoch_length(dataset: &Dataset, convention: EpochConvention) -> usize {
    match convention {
        EpochConvention::PairCount => {
            let h = dataset.horizon_h;
            dataset.trajectories.len() * (h * (h - 1) / 2)
        }
        EpochConvention::Fixed(count) => count,
    }
}
