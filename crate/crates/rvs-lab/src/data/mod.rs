//! Trajectory data model: episode containers, hindsight outcome sampling,
//! filtered-cloning selection, train/validation splitting, and persistence.

mod filters;
mod io;
mod outcome;
mod trajectory;

pub use filters::{
    default_success, filter_successful, filter_top_fraction, normalized_score, split_indices,
    split_train_validation,
};
pub(crate) use io::ByteReader;
pub use io::{
    dataset_content_hash, load_dataset, load_dataset_binary, load_dataset_jsonl, save_dataset,
    save_dataset_binary, save_dataset_jsonl,
};
pub use outcome::{
    avg_return_bounds, avg_return_to_go, build_batch, normalize_avg_return, sample_goal,
    BatchSampler, GoalExtractor, OutcomeSpec, TimestepWeighting, TrainingExample,
};
pub use trajectory::{Dataset, Trajectory};
