//! Batch evaluation: n independent rollouts under a protocol, aggregated
//! into a report. Worker count never changes the result.

use rayon::prelude::*;

use crate::envs::{make_env, Env};
use crate::error::{Error, Result};
use crate::nn::SampleMode;
use crate::rng::sub_seed;
use crate::train::PolicyArtifact;

use super::plan::EvalProtocol;
use super::report::{EvalReport, RolloutRecord};
use super::rollout::rollout;

/// Batch evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub rollouts: usize,
    /// Master seed; every per-rollout seed and sampled goal derives from it.
    pub eval_seed: u64,
    pub mode: SampleMode,
    /// Worker threads: 1 runs serially, 0 uses all cores.
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            rollouts: 100,
            eval_seed: 0,
            mode: SampleMode::Stochastic,
            workers: 1,
        }
    }
}

pub fn mode_name(mode: SampleMode) -> &'static str {
    match mode {
        SampleMode::Deterministic => "deterministic",
        SampleMode::Stochastic => "stochastic",
    }
}

/// Runs `options.rollouts` episodes of `artifact` on `env` under `protocol`.
///
/// Each rollout `i` uses its own environment instance, the plan
/// `protocol.plan_for(env, eval_seed, i)`, and the seed
/// `sub_seed(eval_seed, "rollout", i)` — all pure functions of
/// `(eval_seed, i)`, so the report is bit-identical for any worker count.
pub fn evaluate(
    env: &dyn Env,
    artifact: &PolicyArtifact,
    protocol: &EvalProtocol,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if options.rollouts == 0 {
        return Err(Error::InvalidArgument(
            "evaluation needs at least one rollout".into(),
        ));
    }
    let spec = env.spec();
    let run_one = |index: usize| -> Result<RolloutRecord> {
        let local_env = make_env(&spec.env_id)?;
        let plan = protocol.plan_for(local_env.as_ref(), options.eval_seed, index)?;
        let seed = sub_seed(options.eval_seed, "rollout", index as u64);
        let out = rollout(local_env.as_ref(), artifact, &plan, seed, options.mode)?;
        Ok(RolloutRecord {
            index,
            seed,
            steps: out.steps,
            total_return: out.total_return,
            success: out.success,
        })
    };

    // Rollouts are independent and internally deterministic, so any thread
    // count produces the same records in the same order.
    let records: Vec<RolloutRecord> = if options.workers == 1 {
        (0..options.rollouts).map(run_one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers) // 0 means "all cores" for rayon too
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
        pool.install(|| {
            (0..options.rollouts)
                .into_par_iter()
                .map(run_one)
                .collect::<Result<_>>()
        })?
    };

    EvalReport::from_records(
        &spec.env_id,
        &protocol.describe(),
        mode_name(options.mode),
        options.eval_seed,
        spec.reference_scores,
        records,
    )
}
