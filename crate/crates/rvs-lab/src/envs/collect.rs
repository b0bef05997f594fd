//! Scripted dataset collectors: uniform-random exploration plus the
//! per-environment behavior policies (shortest-path experts, the two
//! TwoModeLine speed modes, and the StitchMaze corridor walkers).
//!
//! Collection is deterministic in the seed: episode `i` draws from streams
//! keyed by (seed, role, i), so datasets are reproducible regardless of
//! how the work is scheduled.

use rand::Rng;

use super::grid::GRID_ACTIONS;
use super::stitch_maze::{in_a_region, in_b_region, in_c_region, WAYPOINT_B, WAYPOINT_C};
use super::{ActionSpace, Env, EnvState, FourRooms, StitchMaze};
use crate::data::{Dataset, Trajectory};
use crate::error::{Error, Result};
use crate::rng::{standard_normal, stream, sub_seed, RvsRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptedPolicy {
    /// Constant medium target speed (TwoModeLine).
    Medium,
    /// Optimal scripted behavior (BFS walker, straight-line driver, full
    /// speed).
    Expert,
    /// StitchMaze walker from the A region that parks at waypoint B.
    CorridorAB,
    /// StitchMaze walker from the B region that parks at waypoint C.
    CorridorBC,
}

impl ScriptedPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "medium" => Ok(ScriptedPolicy::Medium),
            "expert" => Ok(ScriptedPolicy::Expert),
            "corridor_ab" => Ok(ScriptedPolicy::CorridorAB),
            "corridor_bc" => Ok(ScriptedPolicy::CorridorBC),
            other => Err(Error::InvalidArgument(format!(
                "unknown scripted policy '{other}' (medium, expert, corridor_AB, corridor_BC)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScriptedPolicy::Medium => "medium",
            ScriptedPolicy::Expert => "expert",
            ScriptedPolicy::CorridorAB => "corridor_AB",
            ScriptedPolicy::CorridorBC => "corridor_BC",
        }
    }
}

fn random_action(space: &ActionSpace, rng: &mut RvsRng) -> Vec<f64> {
    match space {
        ActionSpace::Discrete { n } => vec![rng.gen_range(0..*n) as f64],
        ActionSpace::Box { dims, low, high } => {
            (0..*dims).map(|_| rng.gen_range(*low..=*high)).collect()
        }
    }
}

/// Runs one episode to completion, recording (state, action, reward)
/// triples; the controller sees the live state and the episode's stream.
fn record_episode<F>(
    env: &dyn Env,
    initial: EnvState,
    mut act: F,
    rng: &mut RvsRng,
) -> Result<Trajectory>
where
    F: FnMut(&EnvState, &mut RvsRng) -> Result<Vec<f64>>,
{
    if initial.done {
        return Err(Error::InvalidArgument(
            "cannot record an episode that is already done".into(),
        ));
    }
    let mut state = initial;
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    while !state.done {
        let action = act(&state, rng)?;
        let step = env.step(&state, &action)?;
        states.push(state.observation.clone());
        actions.push(action);
        rewards.push(step.reward);
        state = step.next;
    }
    let len = states.len();
    Ok(Trajectory {
        states,
        actions,
        rewards,
        terminated: len < env.spec().horizon_h,
    })
}

/// Uniform-random behavior: resets with a freshly sampled goal when the
/// environment has a goal space, then acts uniformly until done; repeats
/// until at least `n_steps` transitions are collected.
pub fn collect_random(env: &dyn Env, n_steps: usize, seed: u64) -> Result<Dataset> {
    let spec = env.spec();
    if n_steps < spec.horizon_h {
        return Err(Error::InvalidArgument(format!(
            "n_steps {} is below one horizon ({})",
            n_steps, spec.horizon_h
        )));
    }
    let has_goals = env
        .sample_goal_uniform(&mut stream(seed, "goal-probe", 0))
        .is_ok();
    let role = format!("collect-random:{}", spec.env_id);
    let reset_role = format!("collect-random-reset:{}", spec.env_id);
    let mut trajectories = Vec::new();
    let mut total = 0usize;
    let mut episode = 0u64;
    while total < n_steps {
        let mut rng = stream(seed, &role, episode);
        let goal = if has_goals {
            Some(env.sample_goal_uniform(&mut rng)?)
        } else {
            None
        };
        let initial = env.reset(sub_seed(seed, &reset_role, episode), goal.as_deref())?;
        let traj = record_episode(
            env,
            initial,
            |_, rng| Ok(random_action(&spec.action_space, rng)),
            &mut rng,
        )?;
        total += traj.len();
        trajectories.push(traj);
        episode += 1;
    }
    Ok(Dataset {
        env_id: spec.env_id.clone(),
        horizon_h: spec.horizon_h,
        provenance: format!("random(seed={seed},steps={n_steps})"),
        trajectories,
    })
}

/// Runs a named behavior policy for `n_episodes`. `noise` is the
/// probability of a uniform-random action in discrete environments and a
/// Gaussian action perturbation scale in continuous ones. Corridor
/// collectors regenerate (deterministically) any episode that leaves its
/// designated segment.
pub fn collect_scripted(
    env: &dyn Env,
    policy: ScriptedPolicy,
    n_episodes: usize,
    seed: u64,
    noise: f64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidArgument(format!(
            "noise must be in [0, 1], got {noise}"
        )));
    }
    if n_episodes == 0 {
        return Err(Error::InvalidArgument("n_episodes must be >= 1".into()));
    }
    let spec = env.spec();
    let trajectories = match (spec.env_id.as_str(), policy) {
        ("four-rooms", ScriptedPolicy::Expert) => {
            collect_four_rooms_expert(env, n_episodes, seed, noise)?
        }
        ("point-reach", ScriptedPolicy::Expert) => {
            collect_point_reach_expert(env, n_episodes, seed, noise)?
        }
        ("two-mode-line", ScriptedPolicy::Medium) => {
            collect_two_mode(env, n_episodes, seed, noise, 0.5)?
        }
        ("two-mode-line", ScriptedPolicy::Expert) => {
            collect_two_mode(env, n_episodes, seed, noise, 1.0)?
        }
        ("stitch-maze", ScriptedPolicy::CorridorAB) => {
            collect_corridor(env, n_episodes, seed, noise, CorridorLeg::AToB)?
        }
        ("stitch-maze", ScriptedPolicy::CorridorBC) => {
            collect_corridor(env, n_episodes, seed, noise, CorridorLeg::BToC)?
        }
        (env_id, policy) => {
            return Err(Error::InvalidArgument(format!(
                "policy '{}' is not defined for environment '{env_id}'",
                policy.as_str()
            )))
        }
    };
    Ok(Dataset {
        env_id: spec.env_id.clone(),
        horizon_h: spec.horizon_h,
        provenance: format!(
            "{}(seed={seed},episodes={n_episodes},noise={noise})",
            policy.as_str()
        ),
        trajectories,
    })
}

/// With probability `noise`, a uniform-random action instead of the
/// scripted one. The noise decision draws first so the scripted branch
/// consumes no randomness.
fn maybe_random_discrete(
    scripted: usize,
    noise: f64,
    rng: &mut RvsRng,
) -> Vec<f64> {
    if noise > 0.0 && rng.gen::<f64>() < noise {
        vec![rng.gen_range(0..GRID_ACTIONS) as f64]
    } else {
        vec![scripted as f64]
    }
}

fn collect_four_rooms_expert(
    env: &dyn Env,
    n_episodes: usize,
    seed: u64,
    noise: f64,
) -> Result<Vec<Trajectory>> {
    let rooms = FourRooms::new();
    let grid = rooms.grid();
    let mut out = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes as u64 {
        let mut rng = stream(seed, "collect-expert:four-rooms", episode);
        let goal = env.sample_goal_uniform(&mut rng)?;
        let distances = grid.distances_to((goal[0] as i64, goal[1] as i64));
        let initial = env.reset(
            sub_seed(seed, "collect-expert-reset:four-rooms", episode),
            Some(&goal),
        )?;
        let traj = record_episode(
            env,
            initial,
            |state, rng| {
                let cell = (state.observation[0] as i64, state.observation[1] as i64);
                let scripted = grid.greedy_action(cell, &distances);
                Ok(maybe_random_discrete(scripted, noise, rng))
            },
            &mut rng,
        )?;
        out.push(traj);
    }
    Ok(out)
}

fn collect_point_reach_expert(
    env: &dyn Env,
    n_episodes: usize,
    seed: u64,
    noise: f64,
) -> Result<Vec<Trajectory>> {
    let mut out = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes as u64 {
        let mut rng = stream(seed, "collect-expert:point-reach", episode);
        let goal = env.sample_goal_uniform(&mut rng)?;
        let initial = env.reset(
            sub_seed(seed, "collect-expert-reset:point-reach", episode),
            Some(&goal),
        )?;
        let traj = record_episode(
            env,
            initial,
            |state, rng| {
                let action: Vec<f64> = state
                    .observation
                    .iter()
                    .zip(&goal)
                    .map(|(p, g)| {
                        let v = (g - p).clamp(-1.0, 1.0) + noise * standard_normal(rng);
                        v.clamp(-1.0, 1.0)
                    })
                    .collect();
                Ok(action)
            },
            &mut rng,
        )?;
        out.push(traj);
    }
    Ok(out)
}

fn collect_two_mode(
    env: &dyn Env,
    n_episodes: usize,
    seed: u64,
    noise: f64,
    target: f64,
) -> Result<Vec<Trajectory>> {
    let role = format!("collect-mode{target}:two-mode-line");
    let mut out = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes as u64 {
        let mut rng = stream(seed, &role, episode);
        let initial = env.reset(0, None)?;
        let traj = record_episode(
            env,
            initial,
            |_, rng| Ok(vec![(target + noise * standard_normal(rng)).clamp(0.0, 1.0)]),
            &mut rng,
        )?;
        out.push(traj);
    }
    Ok(out)
}

enum CorridorLeg {
    AToB,
    BToC,
}

fn collect_corridor(
    env: &dyn Env,
    n_episodes: usize,
    seed: u64,
    noise: f64,
    leg: CorridorLeg,
) -> Result<Vec<Trajectory>> {
    let maze = StitchMaze::new();
    let grid = maze.grid();
    let (role, park_x, start_lo, start_hi): (&str, i64, i64, i64) = match leg {
        CorridorLeg::AToB => ("collect-corridor-ab:stitch-maze", WAYPOINT_B.0, 1, 3),
        CorridorLeg::BToC => ("collect-corridor-bc:stitch-maze", WAYPOINT_C.0, 6, 8),
    };
    let park_distances = grid.distances_to((park_x, 7));
    let valid = |traj: &Trajectory| {
        let last = traj.states.last().expect("non-empty");
        let parked = match leg {
            CorridorLeg::AToB => in_b_region(last),
            CorridorLeg::BToC => in_c_region(last),
        };
        // A noisy episode that wanders from the A region to the C region
        // would smuggle a direct demonstration into the dataset.
        let mut seen_a = false;
        let mut shortcut = false;
        for s in &traj.states {
            if in_a_region(s) {
                seen_a = true;
            } else if seen_a && in_c_region(s) {
                shortcut = true;
            }
        }
        parked && !shortcut
    };
    let mut out = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes as u64 {
        let mut accepted = None;
        for attempt in 0..64 {
            let index = episode * 64 + attempt;
            let mut rng = stream(seed, role, index);
            let start_x = rng.gen_range(start_lo..=start_hi);
            let initial = env.reset_from(&[start_x as f64, 7.0], None)?;
            let traj = record_episode(
                env,
                initial,
                |state, rng| {
                    let cell = (state.observation[0] as i64, state.observation[1] as i64);
                    let scripted = grid.greedy_action(cell, &park_distances);
                    Ok(maybe_random_discrete(scripted, noise, rng))
                },
                &mut rng,
            )?;
            if valid(&traj) {
                accepted = Some(traj);
                break;
            }
        }
        out.push(accepted.ok_or_else(|| {
            Error::Dataset("corridor collector could not produce a valid episode".into())
        })?);
    }
    Ok(out)
}
