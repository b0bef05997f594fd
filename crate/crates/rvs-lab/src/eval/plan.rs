//! Conditioning plans: the rule that supplies the policy's condition vector
//! at each rollout step, and the protocols that generate one plan per
//! rollout for a whole evaluation batch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{sample_eval_goal, Env};
use crate::error::{Error, Result};
use crate::rng::{stream, sub_seed};

/// Per-episode conditioning rule. Goals are given in state coordinates (the
/// same shape `Env::reset` accepts); the policy sees them through the
/// artifact's goal extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditioningPlan {
    /// One goal for the whole episode; the environment terminates (and pays)
    /// when it is reached.
    FixedGoal { goal: Vec<f64> },
    /// Return conditioning. `target` is the desired *episode* return; the
    /// condition fed to the policy is the equivalent average reward-to-go
    /// (`target / H`), normalized when the policy was trained on normalized
    /// conditions. Held constant by default; `recompute` instead re-derives
    /// the remaining required average from the rewards collected so far
    /// (an ablation of the constant-target convention).
    FixedReturnTarget {
        target: f64,
        #[serde(default)]
        recompute: bool,
    },
    /// Waypoint following: the policy is conditioned on each waypoint in
    /// turn, advancing when the current observation reaches the active one.
    /// The episode's commanded goal (termination and success) is the final
    /// waypoint.
    DynamicGoal {
        waypoints: Vec<Vec<f64>>,
        /// Euclidean advance threshold; `None` reuses the environment's own
        /// success test, so there is one reached-a-goal rule, not two.
        advance_radius: Option<f64>,
    },
    /// No condition is fed to the policy. `measure_goal`, when set, is still
    /// commanded to the environment so success has a referent — the
    /// behavior-cloning contrast arm.
    Unconditioned { measure_goal: Option<Vec<f64>> },
}

impl ConditioningPlan {
    /// Goal handed to `Env::reset`: the termination and success referent.
    pub fn env_goal(&self) -> Option<&[f64]> {
        match self {
            ConditioningPlan::FixedGoal { goal } => Some(goal),
            ConditioningPlan::FixedReturnTarget { .. } => None,
            ConditioningPlan::DynamicGoal { waypoints, .. } => {
                waypoints.last().map(|w| w.as_slice())
            }
            ConditioningPlan::Unconditioned { measure_goal } => measure_goal.as_deref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            ConditioningPlan::FixedGoal { goal } => {
                if goal.is_empty() || !all_finite(goal) {
                    return Err(Error::InvalidArgument(format!(
                        "goal must be non-empty and finite, got {goal:?}"
                    )));
                }
            }
            ConditioningPlan::FixedReturnTarget { target, .. } => {
                if !target.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "return target must be finite, got {target}"
                    )));
                }
            }
            ConditioningPlan::DynamicGoal {
                waypoints,
                advance_radius,
            } => {
                if waypoints.is_empty() {
                    return Err(Error::InvalidArgument(
                        "dynamic goal needs at least one waypoint".into(),
                    ));
                }
                if waypoints.iter().any(|w| w.is_empty() || !all_finite(w)) {
                    return Err(Error::InvalidArgument(format!(
                        "waypoints must be non-empty and finite, got {waypoints:?}"
                    )));
                }
                if let Some(r) = advance_radius {
                    if !(r.is_finite() && *r > 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "advance radius must be positive and finite, got {r}"
                        )));
                    }
                }
            }
            ConditioningPlan::Unconditioned { measure_goal } => {
                if let Some(g) = measure_goal {
                    if g.is_empty() || !all_finite(g) {
                        return Err(Error::InvalidArgument(format!(
                            "measured goal must be non-empty and finite, got {g:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Human-readable summary for report headers.
    pub fn describe(&self) -> String {
        match self {
            ConditioningPlan::FixedGoal { goal } => format!("fixed-goal {goal:?}"),
            ConditioningPlan::FixedReturnTarget { target, recompute } => {
                let mode = if *recompute { "recomputed" } else { "held" };
                format!("return-target {target} ({mode})")
            }
            ConditioningPlan::DynamicGoal { waypoints, .. } => {
                format!("dynamic-goal {} waypoints", waypoints.len())
            }
            ConditioningPlan::Unconditioned { measure_goal } => match measure_goal {
                Some(g) => format!("unconditioned (goal {g:?} measured)"),
                None => "unconditioned".into(),
            },
        }
    }
}

/// How `evaluate` builds the plan for each of its rollouts. Every choice is
/// a pure function of `(evaluation seed, rollout index)`, so batches are
/// reproducible and independent of worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalProtocol {
    /// A fresh uniform goal per rollout — the standard protocol for
    /// goal-conditioned policies.
    UniformGoals,
    /// The same return target for every rollout — the protocol for
    /// return-conditioned policies.
    ReturnTarget {
        target: f64,
        #[serde(default)]
        recompute: bool,
    },
    /// Unconditioned policy. With `measure_goals`, a uniform goal is still
    /// commanded per rollout so success is defined; without, episodes run
    /// goal-free (reward-only environments).
    Unconditioned { measure_goals: bool },
    /// Every rollout uses the same explicit plan.
    Fixed { plan: ConditioningPlan },
    /// Per-rollout goals drawn uniformly (with replacement) from an explicit
    /// pool — dataset-derived goal strategies.
    GoalPool { goals: Vec<Vec<f64>> },
}

impl EvalProtocol {
    /// The plan rollout `index` runs under.
    pub fn plan_for(&self, env: &dyn Env, eval_seed: u64, index: usize) -> Result<ConditioningPlan> {
        match self {
            EvalProtocol::UniformGoals => {
                let goal = sample_eval_goal(env, sub_seed(eval_seed, "plan-goal", index as u64))?;
                Ok(ConditioningPlan::FixedGoal { goal })
            }
            EvalProtocol::ReturnTarget { target, recompute } => {
                Ok(ConditioningPlan::FixedReturnTarget {
                    target: *target,
                    recompute: *recompute,
                })
            }
            EvalProtocol::Unconditioned { measure_goals } => {
                let measure_goal = if *measure_goals {
                    Some(sample_eval_goal(
                        env,
                        sub_seed(eval_seed, "plan-goal", index as u64),
                    )?)
                } else {
                    None
                };
                Ok(ConditioningPlan::Unconditioned { measure_goal })
            }
            EvalProtocol::Fixed { plan } => Ok(plan.clone()),
            EvalProtocol::GoalPool { goals } => {
                if goals.is_empty() {
                    return Err(Error::InvalidArgument("goal pool is empty".into()));
                }
                let pick = stream(eval_seed, "pool-goal", index as u64).gen_range(0..goals.len());
                Ok(ConditioningPlan::FixedGoal {
                    goal: goals[pick].clone(),
                })
            }
        }
    }

    /// Human-readable summary for report headers.
    pub fn describe(&self) -> String {
        match self {
            EvalProtocol::UniformGoals => "uniform-goals".into(),
            EvalProtocol::ReturnTarget { target, recompute } => {
                let mode = if *recompute { "recomputed" } else { "held" };
                format!("return-target {target} ({mode})")
            }
            EvalProtocol::Unconditioned { measure_goals } => {
                if *measure_goals {
                    "unconditioned (goals measured)".into()
                } else {
                    "unconditioned".into()
                }
            }
            EvalProtocol::Fixed { plan } => format!("fixed: {}", plan.describe()),
            EvalProtocol::GoalPool { goals } => format!("goal-pool ({} goals)", goals.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;

    #[test]
    fn env_goals_follow_the_plan_variant() {
        let fixed = ConditioningPlan::FixedGoal {
            goal: vec![9.0, 1.0],
        };
        assert_eq!(fixed.env_goal(), Some(&[9.0, 1.0][..]));
        let ret = ConditioningPlan::FixedReturnTarget {
            target: 40.0,
            recompute: false,
        };
        assert_eq!(ret.env_goal(), None);
        let dynamic = ConditioningPlan::DynamicGoal {
            waypoints: vec![vec![7.0, 7.0], vec![13.0, 7.0]],
            advance_radius: None,
        };
        assert_eq!(dynamic.env_goal(), Some(&[13.0, 7.0][..]));
        let bc = ConditioningPlan::Unconditioned {
            measure_goal: Some(vec![1.0, 1.0]),
        };
        assert_eq!(bc.env_goal(), Some(&[1.0, 1.0][..]));
    }

    #[test]
    fn invalid_plans_are_rejected() {
        assert!(ConditioningPlan::FixedGoal { goal: vec![] }.validate().is_err());
        assert!(ConditioningPlan::FixedGoal {
            goal: vec![f64::NAN]
        }
        .validate()
        .is_err());
        assert!(ConditioningPlan::FixedReturnTarget {
            target: f64::INFINITY,
            recompute: false
        }
        .validate()
        .is_err());
        assert!(ConditioningPlan::DynamicGoal {
            waypoints: vec![],
            advance_radius: None
        }
        .validate()
        .is_err());
        assert!(ConditioningPlan::DynamicGoal {
            waypoints: vec![vec![1.0, 7.0]],
            advance_radius: Some(0.0)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn uniform_goal_plans_are_seeded_per_rollout() {
        let env = make_env("four-rooms").unwrap();
        let protocol = EvalProtocol::UniformGoals;
        let a = protocol.plan_for(env.as_ref(), 5, 0).unwrap();
        let b = protocol.plan_for(env.as_ref(), 5, 0).unwrap();
        assert_eq!(a, b, "same (seed, index) must give the same plan");
        let c = protocol.plan_for(env.as_ref(), 5, 1).unwrap();
        assert_ne!(a, c, "different rollouts draw different goals");
        for plan in [a, c] {
            let ConditioningPlan::FixedGoal { goal } = plan else {
                panic!("uniform goals must yield fixed-goal plans");
            };
            env.reset(0, Some(&goal)).expect("sampled goal must be valid");
        }
    }

    #[test]
    fn goal_pool_draws_cover_the_pool() {
        let env = make_env("four-rooms").unwrap();
        let pool = vec![vec![1.0, 1.0], vec![9.0, 9.0]];
        let protocol = EvalProtocol::GoalPool { goals: pool.clone() };
        let mut seen = [false, false];
        for i in 0..32 {
            let ConditioningPlan::FixedGoal { goal } =
                protocol.plan_for(env.as_ref(), 3, i).unwrap()
            else {
                panic!("pool protocol must yield fixed-goal plans");
            };
            let idx = pool.iter().position(|g| *g == goal).expect("goal from pool");
            seen[idx] = true;
        }
        assert!(seen[0] && seen[1], "32 draws over 2 goals must hit both");

        let empty = EvalProtocol::GoalPool { goals: vec![] };
        assert!(empty.plan_for(env.as_ref(), 0, 0).is_err());
    }

    #[test]
    fn descriptions_name_the_protocol() {
        assert_eq!(EvalProtocol::UniformGoals.describe(), "uniform-goals");
        assert_eq!(
            EvalProtocol::ReturnTarget {
                target: 50.0,
                recompute: false
            }
            .describe(),
            "return-target 50 (held)"
        );
        assert_eq!(
            EvalProtocol::ReturnTarget {
                target: 50.0,
                recompute: true
            }
            .describe(),
            "return-target 50 (recomputed)"
        );
        assert_eq!(
            ConditioningPlan::Unconditioned { measure_goal: None }.describe(),
            "unconditioned"
        );
        let fixed = EvalProtocol::Fixed {
            plan: ConditioningPlan::FixedGoal {
                goal: vec![13.0, 7.0],
            },
        };
        assert_eq!(fixed.describe(), "fixed: fixed-goal [13.0, 7.0]");
    }

    #[test]
    fn plans_serialize_round_trip() {
        for plan in [
            ConditioningPlan::FixedGoal {
                goal: vec![1.0, 2.0],
            },
            ConditioningPlan::FixedReturnTarget {
                target: 0.5,
                recompute: true,
            },
            ConditioningPlan::DynamicGoal {
                waypoints: vec![vec![7.0, 7.0], vec![13.0, 7.0]],
                advance_radius: Some(1.5),
            },
            ConditioningPlan::Unconditioned { measure_goal: None },
        ] {
            let json = serde_json::to_string(&plan).unwrap();
            let back: ConditioningPlan = serde_json::from_str(&json).unwrap();
            assert_eq!(back, plan);
        }
    }
}
