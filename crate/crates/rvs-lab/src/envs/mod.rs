//! Deterministic desk-scale environments and scripted data collectors.
//!
//! Dynamics are pure functions of (state, action): environments hold no
//! mutable state, so replaying an action log reproduces a trajectory
//! bit-exactly and rollout workers can share one instance. All randomness
//! (start cells, commanded goals, collector noise) flows through explicit
//! seeded streams.

mod collect;
mod four_rooms;
mod grid;
mod point_reach;
mod stitch_maze;
mod two_mode_line;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::HeadSpec;
use crate::rng::{stream, RvsRng};

pub use collect::{collect_random, collect_scripted, ScriptedPolicy};
pub use four_rooms::FourRooms;
pub use grid::{DOWN, LEFT, RIGHT, STAY, UP};
pub use point_reach::PointReach;
pub use stitch_maze::{
    audit_no_shortcuts, in_a_region, in_b_region, in_c_region, StitchMaze, WAYPOINT_A, WAYPOINT_B,
    WAYPOINT_C,
};
pub use two_mode_line::TwoModeLine;

/// Frozen per-environment returns of the scripted random and expert
/// policies (1000-episode means), the anchors for normalized scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScores {
    pub random_return: f64,
    pub expert_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    /// K mutually exclusive actions, stored as a single f64 index.
    Discrete { n: usize },
    /// `dims` continuous components sharing one `[low, high]` range.
    Box { dims: usize, low: f64, high: f64 },
}

impl ActionSpace {
    /// Width of the stored action vector.
    pub fn action_dim(&self) -> usize {
        match self {
            ActionSpace::Discrete { .. } => 1,
            ActionSpace::Box { dims, .. } => *dims,
        }
    }

    /// Categorical policy head matching this space. Discrete spaces get one
    /// bin per action; box spaces are discretized into `bins` per dimension.
    pub fn categorical_head(&self, bins: usize) -> HeadSpec {
        match self {
            ActionSpace::Discrete { n } => HeadSpec::discrete(*n),
            ActionSpace::Box { dims, low, high } => {
                HeadSpec::discretized_box(vec![*low; *dims], vec![*high; *dims], bins)
            }
        }
    }

    /// Diagonal-Gaussian policy head over the stored action vector.
    pub fn gaussian_head(&self) -> HeadSpec {
        HeadSpec::Gaussian {
            action_dims: self.action_dim(),
        }
    }

    /// Interprets a stored/emitted discrete action, rounding to the nearest
    /// index and clamping into range; reports whether clamping or rounding
    /// changed it.
    pub fn discrete_index(&self, action: &[f64]) -> Result<(usize, bool)> {
        let ActionSpace::Discrete { n } = self else {
            return Err(Error::InvalidArgument(
                "discrete_index on a continuous action space".into(),
            ));
        };
        if action.len() != 1 || !action[0].is_finite() {
            return Err(Error::InvalidArgument(format!(
                "discrete action must be one finite number, got {action:?}"
            )));
        }
        let rounded = action[0].round();
        let clamped = rounded.clamp(0.0, (*n - 1) as f64);
        Ok((clamped as usize, clamped != action[0]))
    }

    /// Clips a continuous action into the box; reports whether any
    /// component moved.
    pub fn clip_box(&self, action: &[f64]) -> Result<(Vec<f64>, bool)> {
        let ActionSpace::Box { dims, low, high } = self else {
            return Err(Error::InvalidArgument(
                "clip_box on a discrete action space".into(),
            ));
        };
        if action.len() != *dims || action.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "action must be {dims} finite numbers, got {action:?}"
            )));
        }
        let clipped: Vec<f64> = action.iter().map(|a| a.clamp(*low, *high)).collect();
        let moved = clipped.iter().zip(action).any(|(c, a)| c != a);
        Ok((clipped, moved))
    }

    /// True when `action` lies inside the space without adjustment.
    pub fn contains(&self, action: &[f64]) -> bool {
        match self {
            ActionSpace::Discrete { .. } => self
                .discrete_index(action)
                .map(|(_, adjusted)| !adjusted)
                .unwrap_or(false),
            ActionSpace::Box { .. } => self
                .clip_box(action)
                .map(|(_, moved)| !moved)
                .unwrap_or(false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub env_id: String,
    pub state_dim: usize,
    pub action_space: ActionSpace,
    #[serde(rename = "horizon_H")]
    pub horizon_h: usize,
    pub goal_extractor_id: String,
    pub reference_scores: ReferenceScores,
    /// Human-readable description of the goal space.
    pub goal_space: String,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_h < 1 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        if self.reference_scores.expert_return <= self.reference_scores.random_return {
            return Err(Error::InvalidArgument(format!(
                "expert reference {} must exceed random reference {}",
                self.reference_scores.expert_return, self.reference_scores.random_return
            )));
        }
        Ok(())
    }
}

/// A point in an episode. `done` is set when the commanded goal has been
/// reached or the horizon is exhausted; stepping a done state is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub elapsed: usize,
    /// Commanded goal, when the episode has one (termination + reward).
    pub goal: Option<Vec<f64>>,
    pub done: bool,
}

/// Result of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next: EnvState,
    pub reward: f64,
    /// The action had to be clipped/rounded into the action space.
    pub clipped: bool,
}

pub trait Env: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Starts an episode, deterministically in (seed, goal). A commanded
    /// goal makes the episode terminate (with reward) on reaching it.
    fn reset(&self, seed: u64, goal: Option<&[f64]>) -> Result<EnvState>;

    /// Starts an episode at an explicit observation (scripted collectors,
    /// replay verification).
    fn reset_from(&self, observation: &[f64], goal: Option<&[f64]>) -> Result<EnvState>;

    fn step(&self, state: &EnvState, action: &[f64]) -> Result<Step>;

    /// Uniform draw over the goal space; errors for reward-only
    /// environments with no goals.
    fn sample_goal_uniform(&self, rng: &mut RvsRng) -> Result<Vec<f64>>;

    /// Env-specific success test (exact cell match or radius).
    fn goal_reached(&self, observation: &[f64], goal: &[f64]) -> bool;
}

/// Seeded evaluation-goal draw, stable across workers.
pub fn sample_eval_goal(env: &dyn Env, seed: u64) -> Result<Vec<f64>> {
    let role = format!("eval-goal:{}", env.spec().env_id);
    env.sample_goal_uniform(&mut stream(seed, &role, 0))
}

pub const ENV_IDS: [&str; 4] = ["four-rooms", "point-reach", "two-mode-line", "stitch-maze"];

/// Instantiates a built-in environment by id.
pub fn make_env(env_id: &str) -> Result<Box<dyn Env>> {
    match env_id {
        "four-rooms" => Ok(Box::new(FourRooms::new())),
        "point-reach" => Ok(Box::new(PointReach::new())),
        "two-mode-line" => Ok(Box::new(TwoModeLine::new())),
        "stitch-maze" => Ok(Box::new(StitchMaze::new())),
        other => Err(Error::InvalidArgument(format!(
            "unknown environment '{other}'; available: {}",
            ENV_IDS.join(", ")
        ))),
    }
}

/// Shared guard for `step` preconditions.
fn check_steppable(state: &EnvState, spec: &EnvSpec) -> Result<()> {
    if state.done {
        return Err(Error::InvalidArgument(format!(
            "cannot step a finished episode of {}",
            spec.env_id
        )));
    }
    if state.elapsed >= spec.horizon_h {
        return Err(Error::InvalidArgument(format!(
            "episode exceeded horizon {} without done flag",
            spec.horizon_h
        )));
    }
    Ok(())
}
