//! FourRooms: an 11x11 gridworld split into four rooms by a wall cross
//! with one door per wall segment. Five actions (up/down/left/right/stay),
//! 50-step horizon, goal = any free cell, reward 1 exactly when the goal
//! cell is entered (the episode then ends).

use super::grid::{Grid, GRID_ACTIONS};
use super::{check_steppable, ActionSpace, Env, EnvSpec, EnvState, ReferenceScores, Step};
use crate::error::{Error, Result};
use crate::rng::{stream, RvsRng};

const SIZE: i64 = 11;
const HORIZON: usize = 50;

/// Measured once from 1000 scripted episodes (uniform-random actions vs.
/// shortest-path walker, noise 0) and frozen; see the ignored
/// `print_reference_scores` test in the collector module.
const REFERENCE: ReferenceScores = ReferenceScores {
    random_return: 0.142,
    expert_return: 1.0,
};

pub struct FourRooms {
    grid: Grid,
    spec: EnvSpec,
}

impl Default for FourRooms {
    fn default() -> Self {
        Self::new()
    }
}

impl FourRooms {
    pub fn new() -> Self {
        // Wall cross at x=5 / y=5 with doors at (5,2), (5,7), (2,5), (8,5).
        let grid = Grid::new(SIZE, SIZE, |x, y| {
            (x == 5 && y != 2 && y != 7) || (y == 5 && x != 2 && x != 8)
        });
        let spec = EnvSpec {
            env_id: "four-rooms".into(),
            state_dim: 2,
            action_space: ActionSpace::Discrete { n: GRID_ACTIONS },
            horizon_h: HORIZON,
            goal_extractor_id: "identity".into(),
            reference_scores: REFERENCE,
            goal_space: "any free cell, as (x, y) integer coordinates".into(),
        };
        FourRooms { grid, spec }
    }

    pub(super) fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Which room a cell is in (0..4, row-major quadrants), or None for
    /// door cells on the wall cross.
    pub fn room_of(cell: (i64, i64)) -> Option<usize> {
        if cell.0 == 5 || cell.1 == 5 {
            return None;
        }
        Some(match (cell.0 < 5, cell.1 < 5) {
            (true, true) => 0,
            (false, true) => 1,
            (true, false) => 2,
            (false, false) => 3,
        })
    }

    pub(super) fn cell_of(&self, observation: &[f64]) -> Result<(i64, i64)> {
        if observation.len() != 2
            || observation.iter().any(|v| !v.is_finite() || v.fract() != 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "four-rooms state must be two integer coordinates, got {observation:?}"
            )));
        }
        let cell = (observation[0] as i64, observation[1] as i64);
        if !self.grid.is_free(cell.0, cell.1) {
            return Err(Error::InvalidArgument(format!(
                "cell {cell:?} is a wall or out of bounds"
            )));
        }
        Ok(cell)
    }

    fn obs(cell: (i64, i64)) -> Vec<f64> {
        vec![cell.0 as f64, cell.1 as f64]
    }
}

impl Env for FourRooms {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, seed: u64, goal: Option<&[f64]>) -> Result<EnvState> {
        let goal_cell = goal.map(|g| self.cell_of(g)).transpose()?;
        let mut rng = stream(seed, "reset:four-rooms", 0);
        let mut start = self.grid.uniform_free_cell(&mut rng);
        // A commanded goal excludes itself as the start cell.
        while Some(start) == goal_cell {
            start = self.grid.uniform_free_cell(&mut rng);
        }
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
        let reward = if reached { 1.0 } else { 0.0 };
        Ok(Step {
            next: EnvState {
                observation: Self::obs(next_cell),
                elapsed,
                goal: state.goal.clone(),
                done: reached || elapsed >= self.spec.horizon_h,
            },
            reward,
            clipped,
        })
    }

    fn sample_goal_uniform(&self, rng: &mut RvsRng) -> Result<Vec<f64>> {
        Ok(Self::obs(self.grid.uniform_free_cell(rng)))
    }

    fn goal_reached(&self, observation: &[f64], goal: &[f64]) -> bool {
        observation.len() == 2
            && goal.len() == 2
            && observation[0].round() == goal[0].round()
            && observation[1].round() == goal[1].round()
    }
}
