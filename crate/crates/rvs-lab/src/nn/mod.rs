//! From-scratch dense network: matrix kernels, layers, action heads,
//! backprop, Adam, and a finite-difference gradient verifier.

pub mod adam;
pub mod grad_check;
pub mod head;
pub mod layer;
pub mod matrix;
pub mod policy;

pub use adam::{adam_step, AdamState};
pub use grad_check::gradient_check;
pub use head::{
    bin_center, bin_index, nll_loss, sample_action, HeadOutputs, HeadSpec, NllResult, SampleMode,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use layer::DenseLayer;
pub use matrix::Matrix;
pub use policy::{DropoutMasks, ForwardTrace, Gradients, MlpPolicy};
