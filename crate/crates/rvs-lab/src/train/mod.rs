//! Deterministic supervised training on relabeled trajectories:
//! configuration, the gradient loop, metrics, checkpointing, and sweeps.

mod checkpoint;
mod config;
mod metrics;
mod run;
mod sweep;

pub use checkpoint::{load_checkpoint, save_checkpoint, PolicyArtifact};
pub use config::{load_config, HeadKind, TrainConfig, DEFAULT_BINS};
pub use metrics::{MetricsLog, MetricsRecord, METRICS_CSV_HEADER};
pub use run::{
    epoch_length, resume_training, train, train_with, CheckpointObserver, EpochConvention,
    RolloutEvaluator, TrainOutput, FIXED_EPOCH_LENGTH, METRICS_BATCH,
};
pub use sweep::{run_sweep, sweep_rows_to_csv, CellEvaluator, SweepAxes, SweepRow, SWEEP_CSV_HEADER};
