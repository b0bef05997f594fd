//! Hyperparameter sweeps: the full cross-product of width x dropout x batch
//! size, replicated over seeds, with per-cell failures recorded instead of
//! aborting the sweep.

use rayon::prelude::*;

use super::checkpoint::PolicyArtifact;
use super::config::TrainConfig;
use super::run::train;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::sub_seed;

/// Values to sweep per axis. An empty axis keeps the base config's value,
/// so a sweep over width alone does not need to restate the others.
#[derive(Debug, Clone, Default)]
pub struct SweepAxes {
    pub widths: Vec<usize>,
    pub dropouts: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

/// Final per-rollout metrics for one trained cell: `(mean_return,
/// success_fraction)`. Runs post-training, outside the cell's stream.
pub type CellEvaluator<'a> = &'a (dyn Fn(&PolicyArtifact) -> Result<(f64, f64)> + Sync);

/// One sweep cell's outcome. `train_seed` is the seed the cell actually
/// trained with, derived from the base seed and the cell's identity, so any
/// row can be reproduced standalone by rerunning that config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub hidden_width: usize,
    pub dropout_p: f64,
    pub batch_size: usize,
    /// Replicate label from the caller's seed list.
    pub seed: u64,
    pub train_seed: u64,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub eval_return: Option<f64>,
    pub eval_success: Option<f64>,
    /// Why this cell failed, when it did; the sweep itself continues.
    pub error: Option<String>,
}

/// Fixed CSV schema for sweep reports.
pub const SWEEP_CSV_HEADER: &str =
    "hidden_width,dropout_p,batch_size,seed,train_seed,train_loss,val_loss,eval_return,eval_success,error";

pub fn sweep_rows_to_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.hidden_width,
            r.dropout_p,
            r.batch_size,
            r.seed,
            r.train_seed,
            opt(r.final_train_loss),
            opt(r.final_val_loss),
            opt(r.eval_return),
            opt(r.eval_success),
            // Keep the row single-line and comma-free.
            r.error
                .as_deref()
                .unwrap_or("")
                .replace([',', '\n'], ";")
        ));
    }
    out
}

/// The concrete (config, labels) for one cell.
fn cell_config(
    base: &TrainConfig,
    width: usize,
    dropout: f64,
    batch: usize,
    seed: u64,
) -> (TrainConfig, u64) {
    // Each cell owns an independent random stream: its training seed is
    // derived from the base seed and the cell's identity (not its position,
    // so reordering axes cannot silently change results).
    let role = format!("sweep-cell:w{width}:p{dropout}:b{batch}");
    let train_seed = sub_seed(base.seed, &role, seed);
    let config = TrainConfig {
        hidden_width: width,
        dropout_p: dropout,
        batch_size: batch,
        seed: train_seed,
        ..base.clone()
    };
    (config, train_seed)
}

/// Trains the full cross-product of `axes` x `seeds` and reports one row
/// per cell. Individual cell failures are recorded in their row; only
/// malformed sweep definitions error out. `workers = 0` uses all cores;
/// results are identical for any worker count.
pub fn run_sweep(
    dataset: &Dataset,
    base: &TrainConfig,
    axes: &SweepAxes,
    seeds: &[u64],
    workers: usize,
    evaluator: Option<CellEvaluator<'_>>,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one seed".into()));
    }
    let or_base = |values: &[usize], base_value: usize| -> Vec<usize> {
        if values.is_empty() {
            vec![base_value]
        } else {
            values.to_vec()
        }
    };
    let widths = or_base(&axes.widths, base.hidden_width);
    let batches = or_base(&axes.batch_sizes, base.batch_size);
    let dropouts = if axes.dropouts.is_empty() {
        vec![base.dropout_p]
    } else {
        axes.dropouts.clone()
    };

    let mut cells = Vec::new();
    for &width in &widths {
        for &dropout in &dropouts {
            for &batch in &batches {
                for &seed in seeds {
                    cells.push((width, dropout, batch, seed));
                }
            }
        }
    }

    let run_cell = |&(width, dropout, batch, seed): &(usize, f64, usize, u64)| -> SweepRow {
        let (config, train_seed) = cell_config(base, width, dropout, batch, seed);
        let mut row = SweepRow {
            hidden_width: width,
            dropout_p: dropout,
            batch_size: batch,
            seed,
            train_seed,
            final_train_loss: None,
            final_val_loss: None,
            eval_return: None,
            eval_success: None,
            error: None,
        };
        match train(dataset, &config) {
            Ok(out) => {
                let last = out.metrics.last().expect("training always logs a record");
                row.final_train_loss = Some(last.train_loss);
                row.final_val_loss = Some(last.val_loss);
                if let Some(eval) = evaluator {
                    match eval(&out.artifact) {
                        Ok((ret, succ)) => {
                            row.eval_return = Some(ret);
                            row.eval_success = Some(succ);
                        }
                        Err(e) => row.error = Some(format!("evaluation failed: {e}")),
                    }
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    };

    // Cells are independent and internally deterministic, so any thread
    // count produces the same rows in the same order.
    if workers == 1 {
        Ok(cells.iter().map(run_cell).collect())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers) // 0 means "all cores" for rayon too
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
        Ok(pool.install(|| cells.par_iter().map(run_cell).collect()))
    }
}
