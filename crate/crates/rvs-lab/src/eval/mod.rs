//! Evaluation harness: seeded single-episode rollouts under per-step
//! conditioning plans, worker-invariant batch evaluation with CSV reports,
//! and the headline analyses (reward-target sweeps, dataset-derived goal
//! strategies, and the stitching comparison).

mod analyses;
mod evaluate;
mod plan;
mod report;
mod rollout;

pub use analyses::{
    goal_candidate_pool, goal_strategy_compare, reward_target_sweep, stitching_eval, GoalStrategy,
    RewardTargetRow, RewardTargetSweep, StitchingReport, StrategyOutcome,
    OPTIMIZED_GOAL_CANDIDATES, OPTIMIZED_GOAL_ROLLOUTS,
};
pub use evaluate::{evaluate, mode_name, EvalOptions};
pub use plan::{ConditioningPlan, EvalProtocol};
pub use report::{aggregate, EvalReport, RolloutRecord};
pub use rollout::{rollout, rollout_from, RolloutOutcome};
