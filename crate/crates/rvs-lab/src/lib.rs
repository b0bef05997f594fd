//! Offline reinforcement learning via conditional behavior cloning.
//!
//! The crate trains small dense networks to imitate logged behavior
//! conditioned on an outcome — either a goal state or an average
//! reward-to-go — using hindsight relabeling, and ships four small
//! environments plus a training/evaluation harness for studying when
//! that recipe works and when it breaks (reward-target interpolation,
//! goal-conditioning strategies, trajectory stitching).
//!
//! Everything is deterministic given a base seed: random streams are
//! derived by hashing `(seed, role, index)`, so results do not depend
//! on worker count or scheduling.

pub mod data;
pub mod envs;
pub mod error;
pub mod eval;
pub mod manifest;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
