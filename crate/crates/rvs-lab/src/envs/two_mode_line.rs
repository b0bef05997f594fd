//! TwoModeLine: a 1-D track whose reward per step is the realized speed.
//!
//! The drivetrain has two stable gears: commanded target speeds snap into
//! the low band [0.4, 0.6] or the high band [0.9, 1.0], whichever side of
//! 0.75 the command falls on. Intermediate speeds are therefore
//! dynamically unreachable — a dataset mixing a "medium" policy (target
//! 0.5, return near 25) and an "expert" policy (target 1.0, return exactly
//! 50 at zero noise) has two separated return modes with nothing between
//! them, which is the point: return-conditioned policies can hit either
//! mode but cannot be dialed to the midpoint.
//!
//! State is [position / 50, previous realized speed]; episodes always run
//! the full 50-step horizon. There is no goal space.

use super::{check_steppable, ActionSpace, Env, EnvSpec, EnvState, ReferenceScores, Step};
use crate::error::{Error, Result};
use crate::rng::RvsRng;

const HORIZON: usize = 50;
pub const LOW_BAND: (f64, f64) = (0.4, 0.6);
pub const HIGH_BAND: (f64, f64) = (0.9, 1.0);
/// Commands at or above this snap to the high band.
pub const BAND_SPLIT: f64 = 0.75;

/// Measured once from 1000 scripted episodes (uniform-random actions) and
/// frozen; the expert value is exact (realized speed 1.0 for 50 steps).
/// See the ignored `print_reference_scores` test in the collector module.
const REFERENCE: ReferenceScores = ReferenceScores {
    random_return: 28.936,
    expert_return: 50.0,
};

/// The gear dynamics: a commanded target speed becomes the nearest point
/// of whichever stable band its side of the split selects.
pub fn realized_speed(target: f64) -> f64 {
    if target >= BAND_SPLIT {
        target.clamp(HIGH_BAND.0, HIGH_BAND.1)
    } else {
        target.clamp(LOW_BAND.0, LOW_BAND.1)
    }
}

pub struct TwoModeLine {
    spec: EnvSpec,
}

impl Default for TwoModeLine {
    fn default() -> Self {
        Self::new()
    }
}

impl TwoModeLine {
    pub fn new() -> Self {
        TwoModeLine {
            spec: EnvSpec {
                env_id: "two-mode-line".into(),
                state_dim: 2,
                action_space: ActionSpace::Box {
                    dims: 1,
                    low: 0.0,
                    high: 1.0,
                },
                horizon_h: HORIZON,
                goal_extractor_id: "identity".into(),
                reference_scores: REFERENCE,
                goal_space: "none (reward-conditioned track)".into(),
            },
        }
    }

    fn check_observation(&self, observation: &[f64]) -> Result<()> {
        if observation.len() != 2 || observation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "two-mode-line state must be [position/50, previous speed], got {observation:?}"
            )));
        }
        Ok(())
    }
}

impl Env for TwoModeLine {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, _seed: u64, goal: Option<&[f64]>) -> Result<EnvState> {
        if goal.is_some() {
            return Err(Error::InvalidArgument(
                "two-mode-line has no goal space".into(),
            ));
        }
        // The start is fixed: position 0, standing still.
        Ok(EnvState {
            observation: vec![0.0, 0.0],
            elapsed: 0,
            goal: None,
            done: false,
        })
    }

    fn reset_from(&self, observation: &[f64], goal: Option<&[f64]>) -> Result<EnvState> {
        if goal.is_some() {
            return Err(Error::InvalidArgument(
                "two-mode-line has no goal space".into(),
            ));
        }
        self.check_observation(observation)?;
        Ok(EnvState {
            observation: observation.to_vec(),
            elapsed: 0,
            goal: None,
            done: false,
        })
    }

    fn step(&self, state: &EnvState, action: &[f64]) -> Result<Step> {
        check_steppable(state, &self.spec)?;
        let (clipped_action, clipped) = self.spec.action_space.clip_box(action)?;
        let speed = realized_speed(clipped_action[0]);
        let position = state.observation[0] * HORIZON as f64 + speed;
        let elapsed = state.elapsed + 1;
        Ok(Step {
            next: EnvState {
                observation: vec![position / HORIZON as f64, speed],
                elapsed,
                goal: None,
                done: elapsed >= HORIZON,
            },
            reward: speed,
            clipped,
        })
    }

    fn sample_goal_uniform(&self, _rng: &mut RvsRng) -> Result<Vec<f64>> {
        Err(Error::InvalidArgument(
            "two-mode-line has no goal space".into(),
        ))
    }

    fn goal_reached(&self, _observation: &[f64], _goal: &[f64]) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run_constant(action: f64) -> f64 {
        let env = TwoModeLine::new();
        let mut state = env.reset(0, None).unwrap();
        let mut total = 0.0;
        while !state.done {
            let step = env.step(&state, &[action]).unwrap();
            total += step.reward;
            state = step.next;
        }
        assert_eq!(state.elapsed, HORIZON);
        total
    }

    #[test]
    fn constant_full_speed_returns_exactly_fifty() {
        assert_eq!(run_constant(1.0), 50.0);
    }

    #[test]
    fn constant_half_speed_returns_exactly_twenty_five() {
        assert_eq!(run_constant(0.5), 25.0);
    }

    #[test]
    fn gear_snapping_blocks_intermediate_speeds() {
        assert_eq!(realized_speed(0.75), 0.9);
        assert_eq!(realized_speed(0.7), 0.6);
        assert_eq!(realized_speed(0.65), 0.6);
        assert_eq!(realized_speed(0.2), 0.4);
        assert_eq!(realized_speed(0.0), 0.4);
        assert_eq!(realized_speed(0.95), 0.95);
        assert_eq!(realized_speed(0.45), 0.45);
        assert_eq!(realized_speed(1.0), 1.0);
    }

    #[test]
    fn goals_are_rejected_everywhere() {
        let env = TwoModeLine::new();
        assert!(env.reset(0, Some(&[1.0, 1.0])).is_err());
        let mut rng = crate::rng::stream(0, "x", 0);
        assert!(env.sample_goal_uniform(&mut rng).is_err());
    }

    #[test]
    fn observation_tracks_normalized_position_and_speed() {
        let env = TwoModeLine::new();
        let state = env.reset(0, None).unwrap();
        let step = env.step(&state, &[1.0]).unwrap();
        assert_eq!(step.next.observation, vec![1.0 / 50.0, 1.0]);
        let step2 = env.step(&step.next, &[0.5]).unwrap();
        assert_eq!(step2.next.observation, vec![1.5 / 50.0, 0.5]);
    }

    #[test]
    fn out_of_box_commands_clip_then_snap() {
        let env = TwoModeLine::new();
        let state = env.reset(0, None).unwrap();
        let step = env.step(&state, &[7.0]).unwrap();
        assert!(step.clipped);
        assert_eq!(step.reward, 1.0);
        let neg = env.step(&state, &[-3.0]).unwrap();
        assert!(neg.clipped);
        assert_eq!(neg.reward, 0.4);
    }

    proptest! {
        // Realized speeds always land in a stable band, so per-step rewards
        // stay in [0.4, 0.6] or [0.9, 1.0] — never between.
        #[test]
        fn rewards_stay_inside_the_gear_bands(target in -1.0f64..2.0) {
            let v = realized_speed(target.clamp(0.0, 1.0));
            let in_low = (LOW_BAND.0..=LOW_BAND.1).contains(&v);
            let in_high = (HIGH_BAND.0..=HIGH_BAND.1).contains(&v);
            prop_assert!(in_low || in_high);
        }
    }
}
