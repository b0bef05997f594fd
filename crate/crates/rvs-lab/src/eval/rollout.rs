//! Single-episode rollout of a trained policy under a conditioning plan.
//!
//! The policy's condition vector is rebuilt at every step from the plan —
//! a fixed extracted goal, a (possibly normalized) return target, or the
//! active waypoint of a dynamic plan — while the environment is stepped on
//! the sampled actions until it reports done or the horizon runs out.

use crate::data::{normalize_avg_return, GoalExtractor, OutcomeSpec, Trajectory};
use crate::envs::{Env, EnvState};
use crate::error::{Error, Result};
use crate::nn::{sample_action, Matrix, SampleMode};
use crate::rng::stream;
use crate::train::PolicyArtifact;

use super::plan::ConditioningPlan;

/// Everything one evaluation episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOutcome {
    /// Logged (state, action, reward) triples in collector convention:
    /// `states[t]` is the observation the action was chosen from; the
    /// observation the episode ended on is `final_observation`.
    pub trajectory: Trajectory,
    pub final_observation: Vec<f64>,
    /// The condition vector the policy saw at each step (empty vectors for
    /// unconditioned policies).
    pub conditions: Vec<Vec<f64>>,
    /// Steps at which a dynamic-goal plan advanced to its next waypoint.
    pub waypoint_switches: Vec<usize>,
    /// Steps whose emitted action had to be clipped or rounded into the
    /// action space.
    pub clipped_steps: usize,
    pub total_return: f64,
    pub success: bool,
    /// Actions taken (0 when the commanded goal held at the initial state).
    pub steps: usize,
    /// The commanded goal was already satisfied at reset; the episode
    /// records zero steps and return 1.
    pub initially_done: bool,
}

/// Step-by-step condition source, specialized from (plan, artifact).
enum ConditionSource {
    /// Unconditioned policy: an empty vector every step.
    Empty,
    /// The same vector every step (extracted goal, or held return target).
    Fixed(Vec<f64>),
    /// Remaining-average return target: `(target - paid) / (H - t)`.
    RemainingReturn {
        target: f64,
        paid: f64,
        horizon: usize,
        bounds: Option<(f64, f64)>,
    },
    /// Waypoint following; `conditions[i]` is the extracted form of
    /// `waypoints[i]`.
    Waypoints {
        waypoints: Vec<Vec<f64>>,
        conditions: Vec<Vec<f64>>,
        active: usize,
        advance_radius: Option<f64>,
        switches: Vec<usize>,
    },
}

impl ConditionSource {
    /// Condition for the step taken from `observation` at time `t`,
    /// advancing the active waypoint first when it has been reached.
    fn condition_at(&mut self, env: &dyn Env, observation: &[f64], t: usize) -> Vec<f64> {
        match self {
            ConditionSource::Empty => Vec::new(),
            ConditionSource::Fixed(c) => c.clone(),
            ConditionSource::RemainingReturn {
                target,
                paid,
                horizon,
                bounds,
            } => {
                let remaining = (*target - *paid) / (*horizon - t) as f64;
                let value = match bounds {
                    Some(b) => normalize_avg_return(remaining, *b),
                    None => remaining,
                };
                vec![value]
            }
            ConditionSource::Waypoints {
                waypoints,
                conditions,
                active,
                advance_radius,
                switches,
            } => {
                while *active + 1 < waypoints.len()
                    && waypoint_reached(env, observation, &waypoints[*active], *advance_radius)
                {
                    *active += 1;
                    switches.push(t);
                }
                conditions[*active].clone()
            }
        }
    }

    fn note_reward(&mut self, reward: f64) {
        if let ConditionSource::RemainingReturn { paid, .. } = self {
            *paid += reward;
        }
    }

    fn into_switches(self) -> Vec<usize> {
        match self {
            ConditionSource::Waypoints { switches, .. } => switches,
            _ => Vec::new(),
        }
    }
}

fn waypoint_reached(
    env: &dyn Env,
    observation: &[f64],
    waypoint: &[f64],
    advance_radius: Option<f64>,
) -> bool {
    match advance_radius {
        Some(radius) => {
            observation.len() == waypoint.len()
                && observation
                    .iter()
                    .zip(waypoint)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    <= radius
        }
        None => env.goal_reached(observation, waypoint),
    }
}

fn describe_outcome(outcome: &Option<OutcomeSpec>) -> &'static str {
    match outcome {
        Some(OutcomeSpec::Goal { .. }) => "goal-conditioned",
        Some(OutcomeSpec::AvgReturn { .. }) => "return-conditioned",
        None => "unconditioned",
    }
}

/// Extracts goal coordinates after checking the extractor actually fits the
/// vector, so a malformed artifact surfaces as an error instead of a panic.
fn extract_goal_condition(
    extractor: &GoalExtractor,
    goal: &[f64],
    state_dim: usize,
    condition_dim: usize,
) -> Result<Vec<f64>> {
    if goal.len() != state_dim {
        return Err(Error::ShapeMismatch(format!(
            "goal has {} coordinates, the environment's states have {state_dim}",
            goal.len()
        )));
    }
    if let GoalExtractor::Slice(idx) = extractor {
        if idx.iter().any(|&i| i >= goal.len()) {
            return Err(Error::ShapeMismatch(format!(
                "goal extractor {} indexes past a {}-dim goal",
                extractor.id(),
                goal.len()
            )));
        }
    }
    let condition = extractor.extract(goal);
    if condition.len() != condition_dim {
        return Err(Error::ShapeMismatch(format!(
            "extracted condition has dim {}, the policy expects {condition_dim}",
            condition.len()
        )));
    }
    Ok(condition)
}

/// Builds the per-step condition source, rejecting plans that do not match
/// what the policy was trained to be conditioned on.
fn build_source(
    env: &dyn Env,
    artifact: &PolicyArtifact,
    plan: &ConditioningPlan,
) -> Result<ConditionSource> {
    let outcome = &artifact.config.outcome;
    let mismatch = |plan_name: &str| {
        Error::InvalidArgument(format!(
            "a {plan_name} plan cannot drive a {} policy",
            describe_outcome(outcome)
        ))
    };
    match plan {
        ConditioningPlan::FixedGoal { goal } => {
            let Some(OutcomeSpec::Goal { extractor }) = outcome else {
                return Err(mismatch("fixed-goal"));
            };
            Ok(ConditionSource::Fixed(extract_goal_condition(
                extractor,
                goal,
                artifact.state_dim,
                artifact.condition_dim,
            )?))
        }
        ConditioningPlan::DynamicGoal {
            waypoints,
            advance_radius,
        } => {
            let Some(OutcomeSpec::Goal { extractor }) = outcome else {
                return Err(mismatch("dynamic-goal"));
            };
            let conditions = waypoints
                .iter()
                .map(|w| {
                    extract_goal_condition(
                        extractor,
                        w,
                        artifact.state_dim,
                        artifact.condition_dim,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ConditionSource::Waypoints {
                waypoints: waypoints.clone(),
                conditions,
                active: 0,
                advance_radius: *advance_radius,
                switches: Vec::new(),
            })
        }
        ConditioningPlan::FixedReturnTarget { target, recompute } => {
            let Some(OutcomeSpec::AvgReturn { normalize }) = outcome else {
                return Err(mismatch("return-target"));
            };
            let bounds = if *normalize {
                Some(artifact.norm_bounds.ok_or_else(|| {
                    Error::InvalidArgument(
                        "policy trained on normalized returns but the artifact carries no \
                         normalization bounds"
                            .into(),
                    )
                })?)
            } else {
                None
            };
            let horizon = env.spec().horizon_h;
            if *recompute {
                Ok(ConditionSource::RemainingReturn {
                    target: *target,
                    paid: 0.0,
                    horizon,
                    bounds,
                })
            } else {
                let average = *target / horizon as f64;
                let value = match bounds {
                    Some(b) => normalize_avg_return(average, b),
                    None => average,
                };
                Ok(ConditionSource::Fixed(vec![value]))
            }
        }
        ConditioningPlan::Unconditioned { .. } => {
            if outcome.is_some() {
                return Err(mismatch("unconditioned"));
            }
            Ok(ConditionSource::Empty)
        }
    }
}

/// Environment/artifact compatibility guard shared by every evaluation path.
fn check_compat(env: &dyn Env, artifact: &PolicyArtifact) -> Result<()> {
    let spec = env.spec();
    if spec.env_id != artifact.env_id {
        return Err(Error::InvalidArgument(format!(
            "policy was trained for '{}', cannot evaluate on '{}'",
            artifact.env_id, spec.env_id
        )));
    }
    if spec.state_dim != artifact.state_dim {
        return Err(Error::ShapeMismatch(format!(
            "environment states have dim {}, the policy expects {}",
            spec.state_dim, artifact.state_dim
        )));
    }
    let condition_dim = artifact
        .config
        .outcome
        .as_ref()
        .map_or(0, |o| o.condition_dim(artifact.state_dim));
    if condition_dim != artifact.condition_dim {
        return Err(Error::ShapeMismatch(format!(
            "artifact declares condition dim {}, its outcome implies {condition_dim}",
            artifact.condition_dim
        )));
    }
    if artifact.policy.input_dim != artifact.state_dim + artifact.condition_dim {
        return Err(Error::ShapeMismatch(format!(
            "policy input dim {} is not state dim {} + condition dim {}",
            artifact.policy.input_dim, artifact.state_dim, artifact.condition_dim
        )));
    }
    Ok(())
}

/// Runs one episode from the environment's own reset.
///
/// `seed` fixes both the reset and the action sampling, so identical calls
/// reproduce the episode bit-exactly.
pub fn rollout(
    env: &dyn Env,
    artifact: &PolicyArtifact,
    plan: &ConditioningPlan,
    seed: u64,
    mode: SampleMode,
) -> Result<RolloutOutcome> {
    plan.validate()?;
    check_compat(env, artifact)?;
    let start = env.reset(seed, plan.env_goal())?;
    run_episode(env, artifact, plan, start, seed, mode)
}

/// Runs one episode from an explicit initial state (replay verification,
/// degenerate-goal checks, fixed-start contrasts).
pub fn rollout_from(
    env: &dyn Env,
    artifact: &PolicyArtifact,
    plan: &ConditioningPlan,
    start: EnvState,
    seed: u64,
    mode: SampleMode,
) -> Result<RolloutOutcome> {
    plan.validate()?;
    check_compat(env, artifact)?;
    run_episode(env, artifact, plan, start, seed, mode)
}

fn run_episode(
    env: &dyn Env,
    artifact: &PolicyArtifact,
    plan: &ConditioningPlan,
    start: EnvState,
    seed: u64,
    mode: SampleMode,
) -> Result<RolloutOutcome> {
    let mut source = build_source(env, artifact, plan)?;
    let horizon = env.spec().horizon_h;

    // Degenerate episode: the commanded goal already holds at the initial
    // state. Success with return 1 and zero steps, by convention.
    let goal_at_start = plan
        .env_goal()
        .is_some_and(|g| env.goal_reached(&start.observation, g));
    if start.done || goal_at_start {
        return Ok(RolloutOutcome {
            trajectory: Trajectory {
                states: Vec::new(),
                actions: Vec::new(),
                rewards: Vec::new(),
                terminated: true,
            },
            final_observation: start.observation,
            conditions: Vec::new(),
            waypoint_switches: Vec::new(),
            clipped_steps: 0,
            total_return: if goal_at_start { 1.0 } else { 0.0 },
            success: goal_at_start,
            steps: 0,
            initially_done: true,
        });
    }

    let mut rng = stream(seed, "rollout-actions", 0);
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut conditions = Vec::new();
    let mut clipped_steps = 0;
    let mut total_return = 0.0;
    let mut state = start;
    while !state.done {
        let condition = source.condition_at(env, &state.observation, state.elapsed);
        let mut row = state.observation.clone();
        row.extend_from_slice(&condition);
        let outputs = artifact
            .policy
            .forward_eval(&Matrix::from_rows(std::slice::from_ref(&row)))?;
        let action = sample_action(&outputs, 0, mode, &mut rng);
        let step = env.step(&state, &action)?;
        if step.clipped {
            clipped_steps += 1;
        }
        states.push(state.observation.clone());
        actions.push(action);
        rewards.push(step.reward);
        conditions.push(condition);
        total_return += step.reward;
        source.note_reward(step.reward);
        state = step.next;
    }
    let steps = actions.len();
    let success = plan
        .env_goal()
        .is_some_and(|g| env.goal_reached(&state.observation, g));
    Ok(RolloutOutcome {
        trajectory: Trajectory {
            states,
            actions,
            rewards,
            terminated: state.elapsed < horizon,
        },
        final_observation: state.observation,
        conditions,
        waypoint_switches: source.into_switches(),
        clipped_steps,
        total_return,
        success,
        steps,
        initially_done: false,
    })
}
