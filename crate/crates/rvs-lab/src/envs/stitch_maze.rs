//! StitchMaze: a 15x15 gridworld whose only free cells form a corridor
//! along row 7 with waypoints A=(1,7), B=(7,7), C=(13,7). Training data
//! contains only A-to-B and B-to-C trajectories (see the corridor
//! collectors); evaluation resets the agent in the A region with goal C,
//! so succeeding requires composing behavior from the two trajectory
//! populations — no training trajectory goes A-to-C, which
//! [`audit_no_shortcuts`] enforces.

use rand::Rng;

use super::grid::{Grid, GRID_ACTIONS};
use super::{check_steppable, ActionSpace, Env, EnvSpec, EnvState, ReferenceScores, Step};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, RvsRng};

const SIZE: i64 = 15;
const HORIZON: usize = 50;
const ROW: i64 = 7;
const X_MIN: i64 = 1;
const X_MAX: i64 = 13;

pub const WAYPOINT_A: (i64, i64) = (1, ROW);
pub const WAYPOINT_B: (i64, i64) = (7, ROW);
pub const WAYPOINT_C: (i64, i64) = (13, ROW);

/// Measured once from 1000 scripted episodes (uniform-random actions from
/// A-region starts with goal C vs. direct walker) and frozen; see the
/// ignored `print_reference_scores` test in the collector module.
const REFERENCE: ReferenceScores = ReferenceScores {
    random_return: 0.016,
    expert_return: 1.0,
};

/// A-region: corridor cells within 2 steps of waypoint A.
pub fn in_a_region(observation: &[f64]) -> bool {
    region_contains(observation, WAYPOINT_A.0, WAYPOINT_A.0 + 2)
}

/// B-region: corridor cells within 1 step of waypoint B.
pub fn in_b_region(observation: &[f64]) -> bool {
    region_contains(observation, WAYPOINT_B.0 - 1, WAYPOINT_B.0 + 1)
}

/// C-region: corridor cells within 2 steps of waypoint C.
pub fn in_c_region(observation: &[f64]) -> bool {
    region_contains(observation, WAYPOINT_C.0 - 2, WAYPOINT_C.0)
}

fn region_contains(observation: &[f64], x_lo: i64, x_hi: i64) -> bool {
    observation.len() == 2
        && observation[1].round() as i64 == ROW
        && (x_lo..=x_hi).contains(&(observation[0].round() as i64))
}

/// Verifies the stitching precondition: no trajectory may visit the A
/// region and later the C region. A dataset violating this contains a
/// direct demonstration and cannot support a stitching claim.
pub fn audit_no_shortcuts(dataset: &Dataset) -> Result<()> {
    for (i, traj) in dataset.trajectories.iter().enumerate() {
        let mut seen_a = false;
        for (t, state) in traj.states.iter().enumerate() {
            if in_a_region(state) {
                seen_a = true;
            } else if seen_a && in_c_region(state) {
                return Err(Error::Dataset(format!(
                    "trajectory {i} reaches the C region at step {t} after visiting the A region"
                )));
            }
        }
    }
    Ok(())
}

pub struct StitchMaze {
    grid: Grid,
    spec: EnvSpec,
}

impl Default for StitchMaze {
    fn default() -> Self {
        Self::new()
    }
}

impl StitchMaze {
    pub fn new() -> Self {
        let grid = Grid::new(SIZE, SIZE, |x, y| y != ROW || !(X_MIN..=X_MAX).contains(&x));
        let spec = EnvSpec {
            env_id: "stitch-maze".into(),
            state_dim: 2,
            action_space: ActionSpace::Discrete { n: GRID_ACTIONS },
            horizon_h: HORIZON,
            goal_extractor_id: "identity".into(),
            reference_scores: REFERENCE,
            goal_space: "corridor cells (x, 7); evaluation goal fixed at waypoint C".into(),
        };
        StitchMaze { grid, spec }
    }

    pub(super) fn grid(&self) -> &Grid {
        &self.grid
    }

    fn cell_of(&self, observation: &[f64]) -> Result<(i64, i64)> {
        if observation.len() != 2
            || observation.iter().any(|v| !v.is_finite() || v.fract() != 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "stitch-maze state must be two integer coordinates, got {observation:?}"
            )));
        }
        let cell = (observation[0] as i64, observation[1] as i64);
        if !self.grid.is_free(cell.0, cell.1) {
            return Err(Error::InvalidArgument(format!(
                "cell {cell:?} is off the corridor"
            )));
        }
        Ok(cell)
    }

    fn obs(cell: (i64, i64)) -> Vec<f64> {
        vec![cell.0 as f64, cell.1 as f64]
    }
}

impl Env for StitchMaze {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// With a commanded goal the episode starts in the A region (the
    /// evaluation protocol); goal-free resets start anywhere on the
    /// corridor.
    fn reset(&self, seed: u64, goal: Option<&[f64]>) -> Result<EnvState> {
        if let Some(g) = goal {
            self.cell_of(g)?;
        }
        let mut rng = stream(seed, "reset:stitch-maze", 0);
        let start = if goal.is_some() {
            let offset = rng.gen_range(0..3);
            (WAYPOINT_A.0 + offset, ROW)
        } else {
            self.grid.uniform_free_cell(&mut rng)
        };
        Ok(EnvState {
            observation: Self::obs(start),
            elapsed: 0,
            goal: goal.map(|g| g.to_vec()),
            done: false,
        })
    }

    fn reset_from(&self, observation: &[f64], goal: Option<&[f64]>) -> Result<EnvState> {
        let cell = self.cell_of(observation)?;
        let goal_cell = goal.map(|g| self.cell_of(g)).transpose()?;
        Ok(EnvState {
            observation: Self::obs(cell),
            elapsed: 0,
            goal: goal.map(|g| g.to_vec()),
            done: goal_cell == Some(cell),
        })
    }

    fn step(&self, state: &EnvState, action: &[f64]) -> Result<Step> {
        check_steppable(state, &self.spec)?;
        let (action_idx, clipped) = self.spec.action_space.discrete_index(action)?;
        let cell = self.cell_of(&state.observation)?;
        let next_cell = self.grid.step_cell(cell, action_idx);
        let elapsed = state.elapsed + 1;
        let reached = state
            .goal
            .as_deref()
            .is_some_and(|g| self.goal_reached(&Self::obs(next_cell), g));
        Ok(Step {
            next: EnvState {
                observation: Self::obs(next_cell),
                elapsed,
                goal: state.goal.clone(),
                done: reached || elapsed >= self.spec.horizon_h,
            },
            reward: if reached { 1.0 } else { 0.0 },
            clipped,
        })
    }

    /// The evaluation goal is always waypoint C: the whole point of the
    /// environment is commanding an outcome no training trajectory achieves.
    fn sample_goal_uniform(&self, _rng: &mut RvsRng) -> Result<Vec<f64>> {
        Ok(Self::obs(WAYPOINT_C))
    }

    fn goal_reached(&self, observation: &[f64], goal: &[f64]) -> bool {
        observation.len() == 2
            && goal.len() == 2
            && observation[0].round() == goal[0].round()
            && observation[1].round() == goal[1].round()
    }
}
