//! Hindsight outcome sampling: turning logged trajectories into supervised
//! (state, condition, action) examples.
//!
//! Two outcome families: goals (a future observed state, passed through the
//! environment's goal extractor) and average reward-to-go (scalar). Plain
//! behavior cloning is the `None` outcome: an empty condition vector.
//!
//! Indexing is 0-based throughout: for a trajectory of length `T`, goal
//! examples use `t in [0, T-2]` with the goal drawn from `states[t+1..=T-1]`,
//! and return-conditioned examples use `t in [0, T-1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::trajectory::{Dataset, Trajectory};
use crate::error::{Error, Result};
use crate::rng::RvsRng;

/// Maps a raw state to the goal coordinates used as the condition vector.
///
/// Serializes as its [`id`](GoalExtractor::id) string (`"identity"`,
/// `"slice(0,1)"`), the same form environment specs use, so config files
/// stay readable.
#[derive(Debug, Clone, PartialEq)]
pub enum GoalExtractor {
    /// The whole state is the goal (gridworlds).
    Identity,
    /// A fixed subset of state components (e.g. the (x, y) position).
    Slice(Vec<usize>),
}

impl Serialize for GoalExtractor {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for GoalExtractor {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let id = String::deserialize(deserializer)?;
        GoalExtractor::from_id(&id).map_err(serde::de::Error::custom)
    }
}

impl GoalExtractor {
    pub fn id(&self) -> String {
        match self {
            GoalExtractor::Identity => "identity".into(),
            GoalExtractor::Slice(idx) => {
                let parts: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
                format!("slice({})", parts.join(","))
            }
        }
    }

    /// Inverse of [`GoalExtractor::id`]: parses `identity` or
    /// `slice(i,j,...)`, the form environment specs use to name their
    /// extractor.
    pub fn from_id(id: &str) -> Result<Self> {
        if id == "identity" {
            return Ok(GoalExtractor::Identity);
        }
        if let Some(rest) = id.strip_prefix("slice(").and_then(|r| r.strip_suffix(')')) {
            let idx: std::result::Result<Vec<usize>, _> =
                rest.split(',').map(|p| p.trim().parse::<usize>()).collect();
            if let Ok(idx) = idx {
                if !idx.is_empty() {
                    return Ok(GoalExtractor::Slice(idx));
                }
            }
        }
        Err(Error::InvalidArgument(format!(
            "unknown goal extractor id '{id}'"
        )))
    }

    pub fn extract(&self, state: &[f64]) -> Vec<f64> {
        match self {
            GoalExtractor::Identity => state.to_vec(),
            GoalExtractor::Slice(idx) => idx.iter().map(|&i| state[i]).collect(),
        }
    }

    pub fn goal_dim(&self, state_dim: usize) -> usize {
        match self {
            GoalExtractor::Identity => state_dim,
            GoalExtractor::Slice(idx) => idx.len(),
        }
    }
}

/// Which outcome the policy is conditioned on (`None` upstream = plain BC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeSpec {
    /// Goal-conditioned: condition = extractor(future observed state).
    Goal { extractor: GoalExtractor },
    /// Reward-conditioned: condition = average reward-to-go scalar,
    /// optionally min-max normalized over the dataset.
    AvgReturn { normalize: bool },
}

impl OutcomeSpec {
    pub fn condition_dim(&self, state_dim: usize) -> usize {
        match self {
            OutcomeSpec::Goal { extractor } => extractor.goal_dim(state_dim),
            OutcomeSpec::AvgReturn { .. } => 1,
        }
    }
}

/// One supervised example. `traj_index` records which trajectory produced
/// it, so training can report which parts of the dataset were consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub state: Vec<f64>,
    pub condition: Vec<f64>,
    pub action: Vec<f64>,
    pub traj_index: usize,
}

/// Uniformly samples a future observed state (`t' in [t+1, T-1]`) and
/// extracts its goal coordinates.
///
/// Requires `t <= T-2`; the last timestep has no future state to relabel
/// with, and batch construction excludes it.
pub fn sample_goal(
    traj: &Trajectory,
    t: usize,
    extractor: &GoalExtractor,
    rng: &mut RvsRng,
) -> Vec<f64> {
    assert!(
        t + 1 < traj.len(),
        "sample_goal: t={t} has no future state in a length-{} trajectory",
        traj.len()
    );
    let t_prime = rng.gen_range(t + 1..traj.len());
    extractor.extract(&traj.states[t_prime])
}

/// Average reward-to-go with the horizon as a constant denominator:
/// `sum(rewards[t..T]) / (H - t)`. Steps the episode never took (early
/// termination) contribute zero to the numerator but still count in the
/// denominator.
pub fn avg_return_to_go(traj: &Trajectory, t: usize, horizon_h: usize) -> f64 {
    assert!(t < traj.len(), "avg_return_to_go: t={t} out of range");
    assert!(
        horizon_h >= traj.len(),
        "avg_return_to_go: horizon {horizon_h} < trajectory length {}",
        traj.len()
    );
    let sum: f64 = traj.rewards[t..].iter().sum();
    sum / (horizon_h - t) as f64
}

/// Min/max of `avg_return_to_go` over every valid `(trajectory, t)` pair;
/// the bounds used by the optional condition normalization.
pub fn avg_return_bounds(dataset: &Dataset) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for traj in &dataset.trajectories {
        for t in 0..traj.len() {
            let w = avg_return_to_go(traj, t, dataset.horizon_h);
            min = min.min(w);
            max = max.max(w);
        }
    }
    (min, max)
}

/// Min-max scaling of an average-return condition; a degenerate range
/// (all outcomes equal) maps to 0.
pub fn normalize_avg_return(omega: f64, bounds: (f64, f64)) -> f64 {
    let (min, max) = bounds;
    if max > min {
        (omega - min) / (max - min)
    } else {
        0.0
    }
}

/// How `(trajectory, t)` pairs are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestepWeighting {
    /// Trajectory uniform, then `t` uniform within it (long and short
    /// trajectories equally likely).
    #[default]
    UniformPerTrajectory,
    /// Uniform over all valid `(trajectory, t)` pairs in the dataset.
    LengthWeighted,
}

/// Draws relabeled training examples from an immutable dataset.
///
/// Sampling consumes only the caller's random stream, so parallel samplers
/// with independent streams are safe and reproducible.
pub struct BatchSampler<'a> {
    dataset: &'a Dataset,
    outcome: Option<OutcomeSpec>,
    weighting: TimestepWeighting,
    /// Trajectory indices with at least one valid timestep.
    eligible: Vec<usize>,
    /// Cumulative valid-timestep counts over `eligible` (length-weighted mode).
    cumulative: Vec<usize>,
    norm_bounds: Option<(f64, f64)>,
}

impl<'a> BatchSampler<'a> {
    pub fn new(
        dataset: &'a Dataset,
        outcome: Option<OutcomeSpec>,
        weighting: TimestepWeighting,
    ) -> Result<Self> {
        dataset.validate()?;
        // Goal relabeling needs a future state, so length-1 trajectories
        // cannot produce goal examples.
        let needs_future = matches!(outcome, Some(OutcomeSpec::Goal { .. }));
        let eligible: Vec<usize> = dataset
            .trajectories
            .iter()
            .enumerate()
            .filter(|(_, traj)| !needs_future || traj.len() >= 2)
            .map(|(i, _)| i)
            .collect();
        if eligible.is_empty() {
            return Err(Error::Dataset(
                "goal relabeling needs a trajectory with at least 2 steps".into(),
            ));
        }
        if let Some(OutcomeSpec::Goal { extractor }) = &outcome {
            let dim = extractor.goal_dim(dataset.state_dim());
            if dim == 0 || dim > dataset.state_dim() {
                return Err(Error::InvalidArgument(format!(
                    "goal extractor {} yields dim {dim} on {}-dim states",
                    extractor.id(),
                    dataset.state_dim()
                )));
            }
            if let GoalExtractor::Slice(idx) = extractor {
                if idx.iter().any(|&i| i >= dataset.state_dim()) {
                    return Err(Error::InvalidArgument(format!(
                        "goal extractor {} indexes past state dim {}",
                        extractor.id(),
                        dataset.state_dim()
                    )));
                }
            }
        }
        let valid = |idx: usize| {
            let t_len = dataset.trajectories[idx].len();
            if needs_future {
                t_len - 1
            } else {
                t_len
            }
        };
        let mut cumulative = Vec::with_capacity(eligible.len());
        let mut total = 0;
        for &idx in &eligible {
            total += valid(idx);
            cumulative.push(total);
        }
        let norm_bounds = match &outcome {
            Some(OutcomeSpec::AvgReturn { normalize: true }) => Some(avg_return_bounds(dataset)),
            _ => None,
        };
        Ok(BatchSampler {
            dataset,
            outcome,
            weighting,
            eligible,
            cumulative,
            norm_bounds,
        })
    }

    /// Like [`BatchSampler::new`], but with the average-return normalization
    /// bounds pinned externally. A validation sampler must condition on the
    /// *training* split's scale, or the two losses would not be comparable
    /// (and evaluation conditioning would drift from training).
    pub fn with_bounds(
        dataset: &'a Dataset,
        outcome: Option<OutcomeSpec>,
        weighting: TimestepWeighting,
        bounds: Option<(f64, f64)>,
    ) -> Result<Self> {
        let mut sampler = Self::new(dataset, outcome, weighting)?;
        if sampler.norm_bounds.is_some() {
            match bounds {
                Some(b) if b.1 >= b.0 => sampler.norm_bounds = Some(b),
                Some(b) => {
                    return Err(Error::InvalidArgument(format!(
                        "normalization bounds reversed: ({}, {})",
                        b.0, b.1
                    )))
                }
                None => {}
            }
        }
        Ok(sampler)
    }

    pub fn condition_dim(&self) -> usize {
        self.outcome
            .as_ref()
            .map_or(0, |o| o.condition_dim(self.dataset.state_dim()))
    }

    /// Bounds backing the normalized average-return condition, if active.
    pub fn norm_bounds(&self) -> Option<(f64, f64)> {
        self.norm_bounds
    }

    fn valid_timesteps(&self, traj: &Trajectory) -> usize {
        match self.outcome {
            Some(OutcomeSpec::Goal { .. }) => traj.len() - 1,
            _ => traj.len(),
        }
    }

    pub fn sample(&self, rng: &mut RvsRng) -> TrainingExample {
        let traj_index = match self.weighting {
            TimestepWeighting::UniformPerTrajectory => {
                self.eligible[rng.gen_range(0..self.eligible.len())]
            }
            TimestepWeighting::LengthWeighted => {
                let total = *self.cumulative.last().expect("non-empty");
                let u = rng.gen_range(0..total);
                let pos = self.cumulative.partition_point(|&c| c <= u);
                self.eligible[pos]
            }
        };
        let traj = &self.dataset.trajectories[traj_index];
        let t = rng.gen_range(0..self.valid_timesteps(traj));
        let condition = match &self.outcome {
            Some(OutcomeSpec::Goal { extractor }) => sample_goal(traj, t, extractor, rng),
            Some(OutcomeSpec::AvgReturn { normalize }) => {
                let omega = avg_return_to_go(traj, t, self.dataset.horizon_h);
                let value = if *normalize {
                    normalize_avg_return(omega, self.norm_bounds.expect("bounds precomputed"))
                } else {
                    omega
                };
                vec![value]
            }
            None => vec![],
        };
        TrainingExample {
            state: traj.states[t].clone(),
            condition,
            action: traj.actions[t].clone(),
            traj_index,
        }
    }

    pub fn batch(&self, batch_size: usize, rng: &mut RvsRng) -> Vec<TrainingExample> {
        (0..batch_size).map(|_| self.sample(rng)).collect()
    }
}

/// One-shot convenience over [`BatchSampler`].
pub fn build_batch(
    dataset: &Dataset,
    outcome: Option<&OutcomeSpec>,
    batch_size: usize,
    rng: &mut RvsRng,
) -> Result<Vec<TrainingExample>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let sampler = BatchSampler::new(dataset, outcome.cloned(), TimestepWeighting::default())?;
    Ok(sampler.batch(batch_size, rng))
}
