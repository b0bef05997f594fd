//! Trajectories and datasets: the unit of offline experience.
//!
//! Indexing convention: code is 0-based. A trajectory stores `T` states,
//! actions and rewards; `states[t]` is the state in which `actions[t]` was
//! taken and `rewards[t]` received. Episodes that ended before the
//! environment horizon carry `terminated = true`; the missing steps count as
//! zero reward wherever a horizon-length sum is needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// True if the episode ended (success/failure) before the horizon.
    pub terminated: bool,
}

impl Trajectory {
    /// Number of steps `T`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Total reward over the episode.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.states.len();
        if t == 0 {
            return Err(Error::Dataset("trajectory has no steps".into()));
        }
        if self.actions.len() != t || self.rewards.len() != t {
            return Err(Error::Dataset(format!(
                "trajectory lengths disagree: {} states, {} actions, {} rewards",
                t,
                self.actions.len(),
                self.rewards.len()
            )));
        }
        let state_dim = self.states[0].len();
        let action_dim = self.actions[0].len();
        for (i, s) in self.states.iter().enumerate() {
            if s.len() != state_dim {
                return Err(Error::Dataset(format!(
                    "state dim changes at step {i}: {} vs {state_dim}",
                    s.len()
                )));
            }
        }
        for (i, a) in self.actions.iter().enumerate() {
            if a.len() != action_dim {
                return Err(Error::Dataset(format!(
                    "action dim changes at step {i}: {} vs {action_dim}",
                    a.len()
                )));
            }
        }
        let finite = self.states.iter().flatten().all(|v| v.is_finite())
            && self.actions.iter().flatten().all(|v| v.is_finite())
            && self.rewards.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Dataset("trajectory contains non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub env_id: String,
    /// Environment horizon `H`; every trajectory satisfies `T <= H`.
    pub horizon_h: usize,
    /// Free text identifying how the data was collected (collector, seed).
    pub provenance: String,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(Error::Dataset("dataset has no trajectories".into()));
        }
        let state_dim = self.trajectories[0].states[0].len();
        let action_dim = self.trajectories[0].actions[0].len();
        for (i, traj) in self.trajectories.iter().enumerate() {
            traj.validate()
                .map_err(|e| Error::Dataset(format!("trajectory {i}: {e}")))?;
            if traj.len() > self.horizon_h {
                return Err(Error::Dataset(format!(
                    "trajectory {i} has {} steps, beyond horizon {}",
                    traj.len(),
                    self.horizon_h
                )));
            }
            if traj.states[0].len() != state_dim || traj.actions[0].len() != action_dim {
                return Err(Error::Dataset(format!(
                    "trajectory {i} dims ({}, {}) differ from dataset dims ({state_dim}, {action_dim})",
                    traj.states[0].len(),
                    traj.actions[0].len()
                )));
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.trajectories[0].states[0].len()
    }

    pub fn action_dim(&self) -> usize {
        self.trajectories[0].actions[0].len()
    }

    /// Total number of (state, action) steps across trajectories.
    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    /// Concatenates two datasets over the same environment and horizon.
    pub fn merge(mut self, other: Dataset) -> Result<Dataset> {
        if self.env_id != other.env_id || self.horizon_h != other.horizon_h {
            return Err(Error::Dataset(format!(
                "cannot merge {}(H={}) with {}(H={})",
                self.env_id, self.horizon_h, other.env_id, other.horizon_h
            )));
        }
        self.provenance = format!("{}+{}", self.provenance, other.provenance);
        self.trajectories.extend(other.trajectories);
        Ok(self)
    }
}
