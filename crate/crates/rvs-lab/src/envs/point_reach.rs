//! PointReach: continuous 2-D navigation. The state is a position in
//! [0,10]^2, the action a velocity in [-1,1]^2 (clipped, with clipping
//! reported), and positions clamp to the arena. Reaching within radius 0.5
//! of the commanded goal pays 1 and ends the episode; horizon 50.

use rand::Rng;

use super::{check_steppable, ActionSpace, Env, EnvSpec, EnvState, ReferenceScores, Step};
use crate::error::{Error, Result};
use crate::rng::{stream, RvsRng};

const ARENA: f64 = 10.0;
const HORIZON: usize = 50;
pub const SUCCESS_RADIUS: f64 = 0.5;

/// Measured once from 1000 scripted episodes (uniform-random actions vs.
/// straight-line walker, noise 0) and frozen; see the ignored
/// `print_reference_scores` test in the collector module.
const REFERENCE: ReferenceScores = ReferenceScores {
    random_return: 0.147,
    expert_return: 1.0,
};

pub struct PointReach {
    spec: EnvSpec,
}

impl Default for PointReach {
    fn default() -> Self {
        Self::new()
    }
}

impl PointReach {
    pub fn new() -> Self {
        PointReach {
            spec: EnvSpec {
                env_id: "point-reach".into(),
                state_dim: 2,
                action_space: ActionSpace::Box {
                    dims: 2,
                    low: -1.0,
                    high: 1.0,
                },
                horizon_h: HORIZON,
                goal_extractor_id: "slice(0,1)".into(),
                reference_scores: REFERENCE,
                goal_space: "any point in [0,10]^2; success within radius 0.5".into(),
            },
        }
    }

    fn check_position(&self, position: &[f64]) -> Result<()> {
        if position.len() != 2
            || position
                .iter()
                .any(|v| !v.is_finite() || *v < 0.0 || *v > ARENA)
        {
            return Err(Error::InvalidArgument(format!(
                "point-reach position must lie in [0,{ARENA}]^2, got {position:?}"
            )));
        }
        Ok(())
    }

    fn distance(a: &[f64], b: &[f64]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }
}

impl Env for PointReach {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, seed: u64, goal: Option<&[f64]>) -> Result<EnvState> {
        if let Some(g) = goal {
            self.check_position(g)?;
        }
        let mut rng = stream(seed, "reset:point-reach", 0);
        let mut draw = || {
            vec![
                rng.gen_range(0.0..=ARENA),
                rng.gen_range(0.0..=ARENA),
            ]
        };
        let mut start = draw();
        // A commanded goal excludes starts already inside the success disc.
        while goal.is_some_and(|g| Self::distance(&start, g) <= SUCCESS_RADIUS) {
            start = draw();
        }
        Ok(EnvState {
            observation: start,
            elapsed: 0,
            goal: goal.map(|g| g.to_vec()),
            done: false,
        })
    }

    fn reset_from(&self, observation: &[f64], goal: Option<&[f64]>) -> Result<EnvState> {
        self.check_position(observation)?;
        if let Some(g) = goal {
            self.check_position(g)?;
        }
        let done = goal.is_some_and(|g| self.goal_reached(observation, g));
        Ok(EnvState {
            observation: observation.to_vec(),
            elapsed: 0,
            goal: goal.map(|g| g.to_vec()),
            done,
        })
    }

    fn step(&self, state: &EnvState, action: &[f64]) -> Result<Step> {
        check_steppable(state, &self.spec)?;
        let (velocity, clipped) = self.spec.action_space.clip_box(action)?;
        let next_pos: Vec<f64> = state
            .observation
            .iter()
            .zip(&velocity)
            .map(|(p, v)| (p + v).clamp(0.0, ARENA))
            .collect();
        let elapsed = state.elapsed + 1;
        let reached = state
            .goal
            .as_deref()
            .is_some_and(|g| self.goal_reached(&next_pos, g));
        Ok(Step {
            next: EnvState {
                observation: next_pos,
                elapsed,
                goal: state.goal.clone(),
                done: reached || elapsed >= self.spec.horizon_h,
            },
            reward: if reached { 1.0 } else { 0.0 },
            clipped,
        })
    }

    fn sample_goal_uniform(&self, rng: &mut RvsRng) -> Result<Vec<f64>> {
        Ok(vec![
            rng.gen_range(0.0..=ARENA),
            rng.gen_range(0.0..=ARENA),
        ])
    }

    fn goal_reached(&self, observation: &[f64], goal: &[f64]) -> bool {
        observation.len() == 2 && goal.len() == 2 && Self::distance(observation, goal) <= SUCCESS_RADIUS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic_and_respects_the_goal_disc() {
        let env = PointReach::new();
        let goal = [5.0, 5.0];
        let a = env.reset(3, Some(&goal)).unwrap();
        let b = env.reset(3, Some(&goal)).unwrap();
        assert_eq!(a, b);
        assert!(PointReach::distance(&a.observation, &goal) > SUCCESS_RADIUS);
    }

    #[test]
    fn out_of_range_goals_are_rejected() {
        let env = PointReach::new();
        assert!(env.reset(0, Some(&[20.0, 0.0])).is_err());
        assert!(env.reset(0, Some(&[-0.1, 3.0])).is_err());
        assert!(env.reset(0, Some(&[f64::NAN, 3.0])).is_err());
    }

    #[test]
    fn movement_clips_both_action_and_position() {
        let env = PointReach::new();
        let state = env.reset_from(&[9.8, 0.1], None).unwrap();
        let step = env.step(&state, &[2.0, -0.5]).unwrap();
        assert!(step.clipped);
        // Velocity clipped to 1.0, position clamped to the arena edge.
        assert_eq!(step.next.observation, vec![10.0, 0.0]);
        let tame = env.step(&state, &[0.25, 0.25]).unwrap();
        assert!(!tame.clipped);
        assert_eq!(tame.next.observation, vec![10.05f64.min(10.0), 0.35]);
    }

    #[test]
    fn entering_the_success_disc_pays_and_ends() {
        let env = PointReach::new();
        let goal = [5.0, 5.0];
        let state = env.reset_from(&[4.0, 5.0], Some(&goal)).unwrap();
        let step = env.step(&state, &[0.6, 0.0]).unwrap();
        assert_eq!(step.reward, 1.0);
        assert!(step.next.done);
        assert!(env.step(&step.next, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn horizon_caps_episodes_without_goals() {
        let env = PointReach::new();
        let mut state = env.reset(0, None).unwrap();
        for _ in 0..HORIZON {
            state = env.step(&state, &[0.1, 0.0]).unwrap().next;
        }
        assert!(state.done);
        assert_eq!(state.elapsed, HORIZON);
    }

    #[test]
    fn eval_goals_cover_the_arena_uniformly() {
        let env = PointReach::new();
        let mut rng = stream(5, "goal-freq", 0);
        let n = 100_000;
        // 4x4 occupancy histogram; each cell has probability 1/16.
        let mut counts = [0usize; 16];
        for _ in 0..n {
            let g = env.sample_goal_uniform(&mut rng).unwrap();
            let gx = ((g[0] / ARENA * 4.0) as usize).min(3);
            let gy = ((g[1] / ARENA * 4.0) as usize).min(3);
            counts[gy * 4 + gx] += 1;
        }
        let p = 1.0 / 16.0;
        let sigma3 = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        for (i, c) in counts.iter().enumerate() {
            let freq = *c as f64 / n as f64;
            assert!((freq - p).abs() <= sigma3, "cell {i}: {freq}");
        }
    }

    #[test]
    fn replaying_velocities_reproduces_positions_bit_exactly() {
        let env = PointReach::new();
        let mut rng = stream(9, "replay", 0);
        let start = env.reset(2, None).unwrap();
        let mut state = start.clone();
        let mut log = Vec::new();
        for _ in 0..20 {
            let a = vec![rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            let step = env.step(&state, &a).unwrap();
            log.push((a, step.next.observation.clone()));
            state = step.next;
        }
        let mut replay = env.reset_from(&start.observation, None).unwrap();
        for (a, want) in log {
            replay = env.step(&replay, &a).unwrap().next;
            assert_eq!(replay.observation, want);
        }
    }
}
