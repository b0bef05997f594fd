//! `rvs` — command-line front end for the conditional behavior-cloning lab.
//!
//! Six subcommands cover the full workflow: `collect` logs data with a
//! scripted policy, `train` fits a conditioned policy, `eval` rolls it out,
//! `sweep` grids hyperparameters, `interpolate` sweeps reward targets, and
//! `report` joins evaluation CSVs across runs. Every command that writes
//! files also writes a `manifest.json` next to them (tool version, argv,
//! seeds, resolved config, SHA-256 stamps of inputs and outputs) so any
//! artifact can be traced to the exact invocation that produced it.
//!
//! Exit codes: 0 success, 2 bad arguments/identifiers/datasets, 3 i/o or
//! parse failures, 4 numeric failures (training aborts on NaN/Inf).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use rvs_lab::data::{load_dataset, save_dataset, Dataset, GoalExtractor, OutcomeSpec};
use rvs_lab::envs::{collect_random, collect_scripted, make_env, Env, ScriptedPolicy};
use rvs_lab::error::{Error, Result};
use rvs_lab::eval::{
    evaluate, mode_name, reward_target_sweep, rollout, ConditioningPlan, EvalOptions,
    EvalProtocol, EvalReport,
};
use rvs_lab::manifest::{file_sha256, unix_timestamp, ManifestBuilder, RunManifest};
use rvs_lab::nn::SampleMode;
use rvs_lab::rng::{stream, sub_seed, RvsRng};
use rvs_lab::train::{
    load_checkpoint, load_config, resume_training, run_sweep, save_checkpoint, sweep_rows_to_csv,
    train_with, CellEvaluator, HeadKind, MetricsLog, MetricsRecord, PolicyArtifact,
    RolloutEvaluator, SweepAxes, TrainConfig, DEFAULT_BINS,
};

#[derive(Parser)]
#[command(
    name = "rvs",
    version,
    about = "Conditional behavior cloning: collect, train, evaluate",
    propagate_version = true
)]
struct Cli {
    /// Directory that relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect a dataset with a scripted or random behavior policy.
    Collect(CollectArgs),
    /// Train a conditioned policy on a dataset.
    Train(TrainArgs),
    /// Roll out a trained policy and write per-rollout results.
    Eval(EvalArgs),
    /// Train a grid of hyperparameter cells and tabulate the results.
    Sweep(SweepArgs),
    /// Sweep the commanded return target of a return-conditioned policy.
    Interpolate(InterpolateArgs),
    /// Summarize evaluation CSVs from several runs into one table.
    Report(ReportArgs),
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    if let Err(e) = run(&cli, argv) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let workdir = cli.workdir.as_path();
    match &cli.command {
        Command::Collect(args) => cmd_collect(workdir, args, argv),
        Command::Train(args) => cmd_train(workdir, args, argv),
        Command::Eval(args) => cmd_eval(workdir, args, argv),
        Command::Sweep(args) => cmd_sweep(workdir, args, argv),
        Command::Interpolate(args) => cmd_interpolate(workdir, args, argv),
        Command::Report(args) => cmd_report(workdir, args, argv),
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn resolve(workdir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        workdir.join(path)
    }
}

/// Directory a file lives in, for the manifest; never empty.
fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

/// Accepts `four_rooms` as well as `four-rooms`.
fn normalize_env_id(raw: &str) -> String {
    raw.trim().to_ascii_lowercase().replace('_', "-")
}

/// Naming a file that is not there is a usage error (exit 2), not an i/o
/// failure; i/o failures are reserved for files that exist but cannot be
/// read or parsed.
fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

/// Warns when the manifest sitting next to an input artifact records a
/// different hash for it — the file changed since the run that wrote it.
fn warn_if_modified(path: &Path) {
    let Ok(manifest) = RunManifest::load(parent_dir(path)) else {
        return;
    };
    let Some(name) = path.file_name() else {
        return;
    };
    let Ok(current) = file_sha256(path) else {
        return;
    };
    for stamp in manifest.outputs.iter().chain(&manifest.inputs) {
        if Path::new(&stamp.path).file_name() == Some(name) && stamp.sha256 != current {
            eprintln!(
                "warning: {} does not match the hash in its manifest; \
                 the file changed after that run wrote it",
                path.display()
            );
            return;
        }
    }
}

fn parse_list<T>(raw: &str, what: &str) -> Result<Vec<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|e| Error::InvalidArgument(format!("{what}: cannot parse '{p}': {e}")))
        })
        .collect()
}

/// Comma list ("0,10,25") or inclusive range "start:stop:step" ("0:50:5"
/// gives the 11 values 0, 5, ..., 50).
fn parse_targets(raw: &str) -> Result<Vec<f64>> {
    let raw = raw.trim();
    let parts: Vec<&str> = raw.split(':').collect();
    let targets = match parts.as_slice() {
        [_] => parse_list::<f64>(raw, "targets")?,
        [start, stop, step] => {
            let start: f64 = parse_list(start, "range start")?
                .pop()
                .ok_or_else(|| Error::InvalidArgument("range start is empty".into()))?;
            let stop: f64 = parse_list(stop, "range stop")?
                .pop()
                .ok_or_else(|| Error::InvalidArgument("range stop is empty".into()))?;
            let step: f64 = parse_list(step, "range step")?
                .pop()
                .ok_or_else(|| Error::InvalidArgument("range step is empty".into()))?;
            if !step.is_finite() || step <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "range step must be positive, got {step}"
                )));
            }
            if !start.is_finite() || !stop.is_finite() || stop < start {
                return Err(Error::InvalidArgument(format!(
                    "bad target range {start}:{stop}:{step}"
                )));
            }
            // Tolerate float error so 0:50:5 includes 50 itself.
            let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..n).map(|i| start + step * i as f64).collect()
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "targets must be a comma list or start:stop:step, got '{raw}'"
            )))
        }
    };
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no targets given".into()));
    }
    Ok(targets)
}

fn parse_mode(raw: &str) -> Result<SampleMode> {
    match raw.to_ascii_lowercase().as_str() {
        "stochastic" => Ok(SampleMode::Stochastic),
        "deterministic" | "greedy" => Ok(SampleMode::Deterministic),
        other => Err(Error::InvalidArgument(format!(
            "sample mode must be 'stochastic' or 'deterministic', got '{other}'"
        ))),
    }
}

fn parse_goal(raw: &str) -> Result<Vec<f64>> {
    let goal = parse_list::<f64>(raw, "goal")?;
    if goal.is_empty() {
        return Err(Error::InvalidArgument("goal has no coordinates".into()));
    }
    Ok(goal)
}

fn parse_outcome(kind: &str, goal_extractor_id: &str) -> Result<Option<OutcomeSpec>> {
    match normalize_env_id(kind).as_str() {
        "none" | "bc" => Ok(None),
        "goal" => Ok(Some(OutcomeSpec::Goal {
            extractor: GoalExtractor::from_id(goal_extractor_id)?,
        })),
        "return" | "avg-return" => Ok(Some(OutcomeSpec::AvgReturn { normalize: true })),
        "return-raw" | "avg-return-raw" => Ok(Some(OutcomeSpec::AvgReturn { normalize: false })),
        other => Err(Error::InvalidArgument(format!(
            "unknown outcome '{other}' (goal, return, return-raw, none)"
        ))),
    }
}

/// Whether the environment defines a goal space at all (TwoModeLine does
/// not); decides how unconditioned policies are scored by default.
fn env_has_goal_space(env: &dyn Env) -> bool {
    env.sample_goal_uniform(&mut stream(0, "goal-space-probe", 0))
        .is_ok()
}

/// The evaluation protocol a policy's own conditioning calls for.
fn protocol_for_outcome(
    outcome: &Option<OutcomeSpec>,
    target: Option<f64>,
    recompute: bool,
    has_goals: bool,
) -> Result<EvalProtocol> {
    match outcome {
        Some(OutcomeSpec::Goal { .. }) => Ok(EvalProtocol::UniformGoals),
        Some(OutcomeSpec::AvgReturn { .. }) => {
            let target = target.ok_or_else(|| {
                Error::InvalidArgument(
                    "evaluating a return-conditioned policy needs --target".into(),
                )
            })?;
            Ok(EvalProtocol::ReturnTarget { target, recompute })
        }
        None => Ok(EvalProtocol::Unconditioned {
            measure_goals: has_goals,
        }),
    }
}

// ---------------------------------------------------------------------------
// collect
// ---------------------------------------------------------------------------

#[derive(Args)]
struct CollectArgs {
    /// Environment id: four-rooms | point-reach | two-mode-line | stitch-maze.
    #[arg(long)]
    env: String,
    /// random | medium | expert | corridor_ab | corridor_bc, or a 50/50
    /// mixture: medium_expert | corridor_ab_bc.
    #[arg(long)]
    collector: String,
    /// Transition budget for the random collector [default: 50000].
    #[arg(long)]
    steps: Option<usize>,
    /// Episode count for scripted collectors [default: 500].
    #[arg(long)]
    episodes: Option<usize>,
    /// Probability a scripted action is replaced by a random one.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset file to write (.jsonl for text, .rvsd for binary).
    #[arg(long)]
    out: PathBuf,
}

fn cmd_collect(workdir: &Path, args: &CollectArgs, argv: Vec<String>) -> Result<()> {
    let out = resolve(workdir, &args.out);
    let env_id = normalize_env_id(&args.env);
    let env = make_env(&env_id)?;
    let collector = args.collector.to_ascii_lowercase().replace('-', "_");

    if collector == "random" {
        if args.episodes.is_some() {
            return Err(Error::InvalidArgument(
                "the random collector takes --steps, not --episodes".into(),
            ));
        }
    } else if args.steps.is_some() {
        return Err(Error::InvalidArgument(
            "scripted collectors take --episodes, not --steps".into(),
        ));
    }

    let mut manifest = ManifestBuilder::new("collect", argv);
    manifest.seed(args.seed);

    let episodes = args.episodes.unwrap_or(500);
    let dataset = match collector.as_str() {
        "random" => collect_random(env.as_ref(), args.steps.unwrap_or(50_000), args.seed)?,
        "medium_expert" => collect_mixture(
            env.as_ref(),
            ScriptedPolicy::Medium,
            ScriptedPolicy::Expert,
            episodes,
            args.seed,
            args.noise,
        )?,
        "corridor_ab_bc" => collect_mixture(
            env.as_ref(),
            ScriptedPolicy::CorridorAB,
            ScriptedPolicy::CorridorBC,
            episodes,
            args.seed,
            args.noise,
        )?,
        other => collect_scripted(
            env.as_ref(),
            ScriptedPolicy::parse(other)?,
            episodes,
            args.seed,
            args.noise,
        )?,
    };
    save_dataset(&dataset, &out)?;

    let transitions: usize = dataset.trajectories.iter().map(|t| t.len()).sum();
    println!(
        "collected {} trajectories ({} transitions) from {}",
        dataset.trajectories.len(),
        transitions,
        env_id
    );
    println!("provenance: {}", dataset.provenance);
    let totals: Vec<f64> = dataset.trajectories.iter().map(|t| t.total_reward()).collect();
    print_return_histogram(&totals);
    println!("wrote {}", out.display());

    manifest.config(&serde_json::json!({
        "env": env_id,
        "collector": collector,
        "steps": args.steps,
        "episodes": if collector == "random" { None } else { Some(episodes) },
        "noise": args.noise,
    }))?;
    manifest.finish(parent_dir(&out), &[&out])?;
    Ok(())
}

/// Half the episodes from each policy (first policy gets the odd one),
/// concatenated in that order with seeds derived per half.
fn collect_mixture(
    env: &dyn Env,
    first: ScriptedPolicy,
    second: ScriptedPolicy,
    episodes: usize,
    seed: u64,
    noise: f64,
) -> Result<Dataset> {
    if episodes < 2 {
        return Err(Error::InvalidArgument(
            "a 50/50 mixture needs at least 2 episodes".into(),
        ));
    }
    let second_n = episodes / 2;
    let first_n = episodes - second_n;
    let mut mixed = collect_scripted(
        env,
        first,
        first_n,
        sub_seed(seed, &format!("mix:{}", first.as_str()), 0),
        noise,
    )?;
    let tail = collect_scripted(
        env,
        second,
        second_n,
        sub_seed(seed, &format!("mix:{}", second.as_str()), 1),
        noise,
    )?;
    mixed.trajectories.extend(tail.trajectories);
    mixed.provenance = format!(
        "mixed {} ({first_n} episodes) + {} ({second_n} episodes), seed {seed}, noise {noise}",
        first.as_str(),
        second.as_str()
    );
    mixed.validate()?;
    Ok(mixed)
}

fn print_return_histogram(totals: &[f64]) {
    if totals.is_empty() {
        return;
    }
    let min = totals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    println!("returns: min {min:.3} max {max:.3} mean {mean:.3}");
    if max - min < 1e-12 {
        println!("  (all returns identical)");
        return;
    }
    const BINS: usize = 10;
    let width = (max - min) / BINS as f64;
    let mut counts = [0usize; BINS];
    for &t in totals {
        let bin = (((t - min) / width) as usize).min(BINS - 1);
        counts[bin] += 1;
    }
    let peak = *counts.iter().max().expect("counts is non-empty");
    for (i, &count) in counts.iter().enumerate() {
        let lo = min + width * i as f64;
        let hi = min + width * (i + 1) as f64;
        let close = if i == BINS - 1 { ']' } else { ')' };
        let bar = "#".repeat((count * 40).div_ceil(peak));
        println!("  [{lo:9.3}, {hi:9.3}{close} {bar:<40} {count}");
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (.jsonl or .rvsd).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint.rvsc, metrics.csv and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// TOML training config; the flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hidden layer width.
    #[arg(long)]
    width: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Dropout probability.
    #[arg(long)]
    dropout: Option<f64>,
    /// Minibatch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Total gradient steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint cadence in gradient steps.
    #[arg(long)]
    eval_every: Option<usize>,
    /// Conditioning: goal | return | return-raw | none.
    #[arg(long)]
    outcome: Option<String>,
    /// Policy head: categorical | gaussian.
    #[arg(long)]
    head: Option<String>,
    /// Bins per action dimension for the categorical head.
    #[arg(long)]
    bins: Option<usize>,
    /// Rollouts per checkpoint for mid-training evaluation (0 = off).
    #[arg(long)]
    eval_rollouts: Option<usize>,
    /// Return target used by mid-training evaluation of return-conditioned
    /// policies.
    #[arg(long)]
    target: Option<f64>,
    /// Continue from <out>/checkpoint.rvsc instead of starting fresh.
    #[arg(long)]
    resume: bool,
}

fn resolved_train_config(
    workdir: &Path,
    args: &TrainArgs,
    goal_extractor_id: &str,
) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let path = resolve(workdir, path);
            require_file(&path, "config")?;
            load_config(&path)?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = args.width {
        config.hidden_width = v;
    }
    if let Some(v) = args.lr {
        config.learning_rate = v;
    }
    if let Some(v) = args.dropout {
        config.dropout_p = v;
    }
    if let Some(v) = args.batch {
        config.batch_size = v;
    }
    if let Some(v) = args.steps {
        config.total_gradient_steps = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.eval_every {
        config.eval_every = v;
    }
    if let Some(v) = args.eval_rollouts {
        config.eval_rollouts = v;
    }
    if let Some(kind) = &args.outcome {
        config.outcome = parse_outcome(kind, goal_extractor_id)?;
    }
    match (&args.head, args.bins) {
        (Some(head), bins) => {
            config.head = match head.to_ascii_lowercase().as_str() {
                "categorical" => HeadKind::Categorical {
                    bins: bins.unwrap_or(DEFAULT_BINS),
                },
                "gaussian" if bins.is_some() => {
                    return Err(Error::InvalidArgument(
                        "--bins only applies to the categorical head".into(),
                    ))
                }
                "gaussian" => HeadKind::Gaussian,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown head '{other}' (categorical, gaussian)"
                    )))
                }
            };
        }
        (None, Some(bins)) => match config.head {
            HeadKind::Categorical { .. } => config.head = HeadKind::Categorical { bins },
            HeadKind::Gaussian => {
                return Err(Error::InvalidArgument(
                    "--bins only applies to the categorical head".into(),
                ))
            }
        },
        (None, None) => {}
    }
    Ok(config)
}

fn reject_resume_overrides(args: &TrainArgs) -> Result<()> {
    let overrides = [
        ("--config", args.config.is_some()),
        ("--width", args.width.is_some()),
        ("--lr", args.lr.is_some()),
        ("--dropout", args.dropout.is_some()),
        ("--batch", args.batch.is_some()),
        ("--seed", args.seed.is_some()),
        ("--eval-every", args.eval_every.is_some()),
        ("--outcome", args.outcome.is_some()),
        ("--head", args.head.is_some()),
        ("--bins", args.bins.is_some()),
        ("--eval-rollouts", args.eval_rollouts.is_some()),
    ];
    if let Some((flag, _)) = overrides.iter().find(|(_, set)| *set) {
        return Err(Error::InvalidArgument(format!(
            "{flag} cannot change on --resume; a resumed run keeps its checkpointed \
             config (--steps may raise the step budget)"
        )));
    }
    Ok(())
}

fn cmd_train(workdir: &Path, args: &TrainArgs, argv: Vec<String>) -> Result<()> {
    let data_path = resolve(workdir, &args.data);
    let out_dir = resolve(workdir, &args.out);
    require_file(&data_path, "dataset")?;
    warn_if_modified(&data_path);
    std::fs::create_dir_all(&out_dir)?;
    let dataset = load_dataset(&data_path)?;
    let env = make_env(&dataset.env_id)?;

    let ckpt_path = out_dir.join("checkpoint.rvsc");
    let metrics_path = out_dir.join("metrics.csv");

    // A resumed run keeps its checkpointed config so the result matches a
    // run that never stopped; only the step budget may be raised.
    let start = if args.resume {
        reject_resume_overrides(args)?;
        require_file(&ckpt_path, "checkpoint to resume from")?;
        let mut artifact = load_checkpoint(&ckpt_path)?;
        if let Some(steps) = args.steps {
            if steps < artifact.steps_done {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint is already at step {}, past --steps {steps}",
                    artifact.steps_done
                )));
            }
            artifact.config.total_gradient_steps = steps;
        }
        Some(artifact)
    } else {
        None
    };
    let config = match &start {
        Some(artifact) => artifact.config.clone(),
        None => resolved_train_config(workdir, args, &env.spec().goal_extractor_id)?,
    };
    if config.eval_rollouts > 0
        && matches!(config.outcome, Some(OutcomeSpec::AvgReturn { .. }))
        && args.target.is_none()
    {
        return Err(Error::InvalidArgument(
            "mid-training evaluation of a return-conditioned policy needs --target".into(),
        ));
    }

    let mut manifest = ManifestBuilder::new("train", argv);
    manifest.seed(config.seed);
    manifest.config(&config)?;
    manifest.input(&data_path)?;
    if let Some(cfg) = &args.config {
        manifest.input(&resolve(workdir, cfg))?;
    }

    // Keep metrics.csv cumulative across resumes: reload the rows from
    // before the checkpoint and let the resumed run append from there.
    let mut log = MetricsLog::new();
    if let Some(artifact) = &start {
        if metrics_path.is_file() {
            for record in MetricsLog::read_csv(&metrics_path)?.records() {
                if record.step < artifact.steps_done {
                    log.push(record.clone())?;
                }
            }
        }
    }

    // Persist at every checkpoint tick (atomic save), so a numeric abort
    // still leaves the last good artifact and its metrics on disk.
    let mut observer = |artifact: &PolicyArtifact, record: &MetricsRecord| -> Result<()> {
        save_checkpoint(artifact, &ckpt_path)?;
        log.push(record.clone())?;
        log.write_csv(&metrics_path)
    };

    let eval_target = args.target;
    let eval_rollouts = config.eval_rollouts;
    let mut rollout_eval = |artifact: &PolicyArtifact, rng: &mut RvsRng| -> Result<(f64, f64)> {
        mid_train_eval(env.as_ref(), artifact, eval_rollouts, eval_target, rng)
    };
    let evaluator: Option<RolloutEvaluator> = if eval_rollouts > 0 {
        Some(&mut rollout_eval)
    } else {
        None
    };

    let output = match &start {
        Some(artifact) => resume_training(&dataset, artifact, Some(&mut observer), evaluator)?,
        None => train_with(&dataset, &config, Some(&mut observer), evaluator)?,
    };
    save_checkpoint(&output.artifact, &ckpt_path)?;

    println!(
        "trained to step {} on {} ({} trajectories, {} held out for validation)",
        output.artifact.steps_done,
        dataset.env_id,
        dataset.trajectories.len(),
        output.validation_trajectories.len()
    );
    if let Some(last) = output.metrics.last() {
        let extra = match (last.eval_return, last.eval_success) {
            (Some(ret), Some(succ)) => format!(" eval_return {ret} eval_success {succ}"),
            _ => String::new(),
        };
        println!(
            "final: train_loss {} val_loss {}{extra}",
            last.train_loss, last.val_loss
        );
    }
    println!("checkpoint: {}", ckpt_path.display());

    manifest.finish(&out_dir, &[&ckpt_path, &metrics_path])?;
    Ok(())
}

/// One mid-training evaluation pass: `n` stochastic rollouts whose goals
/// and seeds come from the training stream (so they are part of the
/// checkpointed run state). Returns (mean_return, success_fraction).
fn mid_train_eval(
    env: &dyn Env,
    artifact: &PolicyArtifact,
    n: usize,
    target: Option<f64>,
    rng: &mut RvsRng,
) -> Result<(f64, f64)> {
    let mut return_sum = 0.0;
    let mut successes = 0usize;
    for _ in 0..n {
        let plan = match &artifact.config.outcome {
            Some(OutcomeSpec::Goal { .. }) => ConditioningPlan::FixedGoal {
                goal: env.sample_goal_uniform(rng)?,
            },
            Some(OutcomeSpec::AvgReturn { .. }) => {
                let target = target.ok_or_else(|| {
                    Error::InvalidArgument(
                        "mid-training evaluation of a return-conditioned policy needs --target"
                            .into(),
                    )
                })?;
                ConditioningPlan::FixedReturnTarget {
                    target,
                    recompute: false,
                }
            }
            None => ConditioningPlan::Unconditioned {
                measure_goal: env.sample_goal_uniform(rng).ok(),
            },
        };
        let seed = rng.gen::<u64>();
        let out = rollout(env, artifact, &plan, seed, SampleMode::Stochastic)?;
        return_sum += out.total_return;
        successes += out.success as usize;
    }
    Ok((return_sum / n as f64, successes as f64 / n as f64))
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EvalArgs {
    /// Trained policy artifact (.rvsc).
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 200)]
    rollouts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// stochastic | deterministic.
    #[arg(long, default_value = "stochastic")]
    mode: String,
    /// uniform-goals | return-target | unconditioned | unconditioned-measured
    /// | fixed-goal. Defaults to the protocol matching the policy's
    /// conditioning.
    #[arg(long)]
    protocol: Option<String>,
    /// Total-return target (return-target protocol).
    #[arg(long)]
    target: Option<f64>,
    /// Re-derive the return condition each step from the reward already paid.
    #[arg(long)]
    recompute: bool,
    /// Comma-separated goal coordinates (fixed-goal protocol).
    #[arg(long)]
    goal: Option<String>,
    /// Worker threads (1 = serial, 0 = all cores); results are identical.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Directory for eval.csv and its manifest.
    #[arg(long)]
    out: PathBuf,
}

fn eval_protocol(args: &EvalArgs, artifact: &PolicyArtifact, has_goals: bool) -> Result<EvalProtocol> {
    let Some(name) = &args.protocol else {
        if let Some(raw) = &args.goal {
            return Ok(EvalProtocol::Fixed {
                plan: ConditioningPlan::FixedGoal {
                    goal: parse_goal(raw)?,
                },
            });
        }
        return protocol_for_outcome(&artifact.config.outcome, args.target, args.recompute, has_goals);
    };
    match normalize_env_id(name).as_str() {
        "uniform-goals" => Ok(EvalProtocol::UniformGoals),
        "return-target" => {
            let target = args.target.ok_or_else(|| {
                Error::InvalidArgument("the return-target protocol needs --target".into())
            })?;
            Ok(EvalProtocol::ReturnTarget {
                target,
                recompute: args.recompute,
            })
        }
        "unconditioned" => Ok(EvalProtocol::Unconditioned {
            measure_goals: false,
        }),
        "unconditioned-measured" => Ok(EvalProtocol::Unconditioned {
            measure_goals: true,
        }),
        "fixed-goal" => {
            let raw = args.goal.as_ref().ok_or_else(|| {
                Error::InvalidArgument("the fixed-goal protocol needs --goal".into())
            })?;
            Ok(EvalProtocol::Fixed {
                plan: ConditioningPlan::FixedGoal {
                    goal: parse_goal(raw)?,
                },
            })
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown protocol '{other}' (uniform-goals, return-target, unconditioned, \
             unconditioned-measured, fixed-goal)"
        ))),
    }
}

fn cmd_eval(workdir: &Path, args: &EvalArgs, argv: Vec<String>) -> Result<()> {
    let ckpt_path = resolve(workdir, &args.checkpoint);
    let out_dir = resolve(workdir, &args.out);
    require_file(&ckpt_path, "checkpoint")?;
    warn_if_modified(&ckpt_path);
    let artifact = load_checkpoint(&ckpt_path)?;
    let env = make_env(&artifact.env_id)?;
    let protocol = eval_protocol(args, &artifact, env_has_goal_space(env.as_ref()))?;
    let options = EvalOptions {
        rollouts: args.rollouts,
        eval_seed: args.seed,
        mode: parse_mode(&args.mode)?,
        workers: args.workers,
    };

    let mut manifest = ManifestBuilder::new("eval", argv);
    manifest.seed(args.seed);
    manifest.config(&serde_json::json!({
        "protocol": protocol.describe(),
        "rollouts": args.rollouts,
        "mode": mode_name(options.mode),
        "workers": args.workers,
    }))?;
    manifest.input(&ckpt_path)?;

    let report = evaluate(env.as_ref(), &artifact, &protocol, &options)?;

    std::fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join("eval.csv");
    std::fs::write(&csv_path, report.to_csv())?;

    println!(
        "{} | {} | {} rollouts ({})",
        report.env_id,
        report.protocol,
        report.records.len(),
        report.mode
    );
    println!("success_rate {}%", report.success_rate);
    println!("mean_return {} (std {})", report.mean_return, report.std_return);
    println!("normalized_score {}", report.normalized_score);
    println!("wrote {}", csv_path.display());

    manifest.finish(&out_dir, &[&csv_path])?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SweepArgs {
    /// Training dataset (.jsonl or .rvsd).
    #[arg(long)]
    data: PathBuf,
    /// Base TOML config shared by every cell; axes and flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated hidden widths; empty keeps the base width.
    #[arg(long, default_value = "")]
    widths: String,
    /// Comma-separated dropout probabilities; empty keeps the base value.
    #[arg(long, default_value = "")]
    dropouts: String,
    /// Comma-separated batch sizes; empty keeps the base value.
    #[arg(long, default_value = "")]
    batches: String,
    /// Comma-separated replicate seeds.
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Total gradient steps per cell.
    #[arg(long)]
    steps: Option<usize>,
    /// Conditioning: goal | return | return-raw | none.
    #[arg(long)]
    outcome: Option<String>,
    /// Worker threads across cells (1 = serial, 0 = all cores).
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Post-training rollouts per cell (0 skips the evaluation columns).
    #[arg(long, default_value_t = 0)]
    eval_rollouts: usize,
    #[arg(long, default_value_t = 0)]
    eval_seed: u64,
    /// Return target for evaluating return-conditioned cells.
    #[arg(long)]
    target: Option<f64>,
    /// Directory for sweep.csv and its manifest.
    #[arg(long)]
    out: PathBuf,
}

fn axis<T>(raw: &str, what: &str, base: T) -> Result<Vec<T>>
where
    T: Copy + std::str::FromStr,
    T::Err: std::fmt::Display,
{
    let values = parse_list::<T>(raw, what)?;
    Ok(if values.is_empty() { vec![base] } else { values })
}

fn cmd_sweep(workdir: &Path, args: &SweepArgs, argv: Vec<String>) -> Result<()> {
    let data_path = resolve(workdir, &args.data);
    let out_dir = resolve(workdir, &args.out);
    require_file(&data_path, "dataset")?;
    warn_if_modified(&data_path);
    let dataset = load_dataset(&data_path)?;
    let env = make_env(&dataset.env_id)?;

    let mut base = match &args.config {
        Some(path) => {
            let path = resolve(workdir, path);
            require_file(&path, "config")?;
            load_config(&path)?
        }
        None => TrainConfig::default(),
    };
    if let Some(steps) = args.steps {
        base.total_gradient_steps = steps;
    }
    if let Some(kind) = &args.outcome {
        base.outcome = parse_outcome(kind, &env.spec().goal_extractor_id)?;
    }
    base.eval_rollouts = 0; // cells are scored after training, not during

    let axes = SweepAxes {
        widths: axis(&args.widths, "widths", base.hidden_width)?,
        dropouts: axis(&args.dropouts, "dropouts", base.dropout_p)?,
        batch_sizes: axis(&args.batches, "batches", base.batch_size)?,
    };
    let seeds: Vec<u64> = parse_list(&args.seeds, "seeds")?;

    let mut manifest = ManifestBuilder::new("sweep", argv);
    for &seed in &seeds {
        manifest.seed(seed);
    }
    manifest.config(&serde_json::json!({
        "base": base,
        "widths": axes.widths,
        "dropouts": axes.dropouts,
        "batch_sizes": axes.batch_sizes,
        "eval_rollouts": args.eval_rollouts,
        "eval_seed": args.eval_seed,
    }))?;
    manifest.input(&data_path)?;
    if let Some(cfg) = &args.config {
        manifest.input(&resolve(workdir, cfg))?;
    }

    let cell_protocol = if args.eval_rollouts > 0 {
        Some(protocol_for_outcome(
            &base.outcome,
            args.target,
            false,
            env_has_goal_space(env.as_ref()),
        )?)
    } else {
        None
    };
    let cell_options = EvalOptions {
        rollouts: args.eval_rollouts,
        eval_seed: args.eval_seed,
        mode: SampleMode::Stochastic,
        workers: 1, // the cells themselves run in parallel
    };
    let score_cell = |artifact: &PolicyArtifact| -> Result<(f64, f64)> {
        let protocol = cell_protocol
            .as_ref()
            .expect("cell evaluator is only installed when eval_rollouts > 0");
        let env = make_env(&artifact.env_id)?;
        let report = evaluate(env.as_ref(), artifact, protocol, &cell_options)?;
        Ok((report.mean_return, report.success_rate / 100.0))
    };
    let evaluator: Option<CellEvaluator> = if args.eval_rollouts > 0 {
        Some(&score_cell)
    } else {
        None
    };

    let rows = run_sweep(&dataset, &base, &axes, &seeds, args.workers, evaluator)?;

    std::fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join("sweep.csv");
    std::fs::write(&csv_path, sweep_rows_to_csv(&rows))?;

    let cells = axes.widths.len() * axes.dropouts.len() * axes.batch_sizes.len();
    println!(
        "swept {} cells x {} seeds -> {} rows on {}",
        cells,
        seeds.len(),
        rows.len(),
        dataset.env_id
    );
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        println!("{failures} cells failed; see the error column");
    }
    println!("wrote {}", csv_path.display());

    manifest.finish(&out_dir, &[&csv_path])?;
    Ok(())
}

// ---------------------------------------------------------------------------
// interpolate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct InterpolateArgs {
    /// Return-conditioned policy artifact (.rvsc).
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma list ("0,10,25") or inclusive range "start:stop:step" ("0:50:5").
    #[arg(long)]
    targets: String,
    /// Rollouts per target.
    #[arg(long, default_value_t = 50)]
    rollouts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// stochastic | deterministic.
    #[arg(long, default_value = "stochastic")]
    mode: String,
    /// Re-derive the return condition each step from the reward already paid.
    #[arg(long)]
    recompute: bool,
    /// Worker threads per target evaluation (1 = serial, 0 = all cores).
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Directory for <env>_interpolation_<timestamp>.csv and its manifest.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_interpolate(workdir: &Path, args: &InterpolateArgs, argv: Vec<String>) -> Result<()> {
    let ckpt_path = resolve(workdir, &args.checkpoint);
    let out_dir = resolve(workdir, &args.out);
    let targets = parse_targets(&args.targets)?;
    require_file(&ckpt_path, "checkpoint")?;
    warn_if_modified(&ckpt_path);
    let artifact = load_checkpoint(&ckpt_path)?;
    let env = make_env(&artifact.env_id)?;
    let options = EvalOptions {
        rollouts: args.rollouts,
        eval_seed: args.seed,
        mode: parse_mode(&args.mode)?,
        workers: args.workers,
    };

    let mut manifest = ManifestBuilder::new("interpolate", argv);
    manifest.seed(args.seed);
    manifest.config(&serde_json::json!({
        "targets": targets,
        "rollouts": args.rollouts,
        "mode": mode_name(options.mode),
        "recompute": args.recompute,
    }))?;
    manifest.input(&ckpt_path)?;

    let sweep = reward_target_sweep(env.as_ref(), &artifact, &targets, args.recompute, &options)?;

    std::fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join(format!(
        "{}_interpolation_{}.csv",
        sweep.env_id,
        unix_timestamp()
    ));
    std::fs::write(&csv_path, sweep.to_csv())?;

    println!(
        "reward-target sweep on {} ({} targets, {} rollouts each, targets {}):",
        sweep.env_id,
        sweep.rows.len(),
        args.rollouts,
        if args.recompute { "recomputed" } else { "held" }
    );
    for row in &sweep.rows {
        println!(
            "  target {:>8} -> mean_return {:.4} (std {:.4})",
            row.target, row.mean_return, row.std_return
        );
    }
    println!("wrote {}", csv_path.display());

    manifest.finish(&out_dir, &[&csv_path])?;
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Args)]
struct ReportArgs {
    /// Evaluation CSVs written by `rvs eval` (one per run).
    #[arg(long, required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Summary CSV to write.
    #[arg(long)]
    out: PathBuf,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn cmd_report(workdir: &Path, args: &ReportArgs, argv: Vec<String>) -> Result<()> {
    let out_path = resolve(workdir, &args.out);
    let mut manifest = ManifestBuilder::new("report", argv);

    let mut by_env: BTreeMap<String, Vec<EvalReport>> = BTreeMap::new();
    for input in &args.inputs {
        let path = resolve(workdir, input);
        require_file(&path, "input")?;
        warn_if_modified(&path);
        manifest.input(&path)?;
        let text = std::fs::read_to_string(&path)?;
        let report = EvalReport::from_csv_str(&text, &path.display().to_string())?;
        by_env.entry(report.env_id.clone()).or_default().push(report);
    }

    let mut csv = String::from(
        "env,runs,success_rate_mean,success_rate_std,mean_return_mean,mean_return_std,normalized_score_mean\n",
    );
    println!(
        "{:<16} {:>4}  {:>20}  {:>24}  {:>10}",
        "env", "runs", "success%", "return", "normalized"
    );
    for (env_id, reports) in &by_env {
        let protocols: BTreeSet<&str> = reports.iter().map(|r| r.protocol.as_str()).collect();
        if protocols.len() > 1 {
            eprintln!(
                "warning: {} mixes evaluation protocols: {}",
                env_id,
                protocols.into_iter().collect::<Vec<_>>().join(" / ")
            );
        }
        let success: Vec<f64> = reports.iter().map(|r| r.success_rate).collect();
        let returns: Vec<f64> = reports.iter().map(|r| r.mean_return).collect();
        let normalized: Vec<f64> = reports.iter().map(|r| r.normalized_score).collect();
        let (s_mean, s_std) = mean_std(&success);
        let (r_mean, r_std) = mean_std(&returns);
        let (n_mean, _) = mean_std(&normalized);
        let runs = reports.len();
        csv.push_str(&format!(
            "{env_id},{runs},{s_mean},{s_std},{r_mean},{r_std},{n_mean}\n"
        ));
        println!(
            "{:<16} {:>4}  {:>12.2} ± {:<5.2}  {:>14.4} ± {:<7.4}  {:>10.2}",
            env_id, runs, s_mean, s_std, r_mean, r_std, n_mean
        );
    }
    std::fs::write(&out_path, csv)?;
    println!("wrote {}", out_path.display());

    manifest.config(&serde_json::json!({ "inputs": args.inputs.len() }))?;
    manifest.finish(parent_dir(&out_path), &[&out_path])?;
    Ok(())
}
