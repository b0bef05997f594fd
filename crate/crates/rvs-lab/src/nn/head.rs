//! Action heads: factorized categorical over discretized bins, and diagonal
//! Gaussian with a learned state-independent log-std vector.
//!
//! The categorical head treats each action dimension independently with
//! `bins_per_dim` bins whose centers sit at the uniform midpoints of
//! `[low, high]`. A discrete space with K actions uses `low = -0.5`,
//! `high = K - 0.5`, which puts the bin centers exactly on 0..K-1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::rng::{standard_normal, RvsRng};

/// Bounds applied to the Gaussian log-std after every optimizer update.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_7; // 0.5 * ln(2*pi)

/// Static description of an action head (no learned parameters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HeadSpec {
    Categorical {
        action_dims: usize,
        bins_per_dim: usize,
        low: Vec<f64>,
        high: Vec<f64>,
    },
    Gaussian { action_dims: usize },
}

impl HeadSpec {
    /// Categorical head for a discrete space with `n` actions: one action
    /// dimension whose bin centers are exactly `0, 1, .., n-1`.
    pub fn discrete(n: usize) -> HeadSpec {
        HeadSpec::Categorical {
            action_dims: 1,
            bins_per_dim: n,
            low: vec![-0.5],
            high: vec![n as f64 - 0.5],
        }
    }

    /// Categorical head over a box action space.
    pub fn discretized_box(low: Vec<f64>, high: Vec<f64>, bins_per_dim: usize) -> HeadSpec {
        HeadSpec::Categorical {
            action_dims: low.len(),
            bins_per_dim,
            low,
            high,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HeadSpec::Categorical {
                action_dims,
                bins_per_dim,
                low,
                high,
            } => {
                if *action_dims < 1 {
                    return Err(Error::InvalidArgument("head needs >= 1 action dim".into()));
                }
                if *bins_per_dim < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "categorical head needs >= 2 bins per dim, got {bins_per_dim}"
                    )));
                }
                if low.len() != *action_dims || high.len() != *action_dims {
                    return Err(Error::ShapeMismatch(format!(
                        "low/high lengths ({}, {}) != action_dims {action_dims}",
                        low.len(),
                        high.len()
                    )));
                }
                for (l, h) in low.iter().zip(high) {
                    if !(l.is_finite() && h.is_finite() && l < h) {
                        return Err(Error::InvalidArgument(format!(
                            "need finite low < high per dim, got [{l}, {h}]"
                        )));
                    }
                }
                Ok(())
            }
            HeadSpec::Gaussian { action_dims } => {
                if *action_dims < 1 {
                    return Err(Error::InvalidArgument("head needs >= 1 action dim".into()));
                }
                Ok(())
            }
        }
    }

    pub fn action_dims(&self) -> usize {
        match self {
            HeadSpec::Categorical { action_dims, .. } => *action_dims,
            HeadSpec::Gaussian { action_dims } => *action_dims,
        }
    }

    /// Width of the network's output projection for this head.
    pub fn output_dim(&self) -> usize {
        match self {
            HeadSpec::Categorical {
                action_dims,
                bins_per_dim,
                ..
            } => action_dims * bins_per_dim,
            HeadSpec::Gaussian { action_dims } => *action_dims,
        }
    }

    /// Number of learned parameters owned by the head itself (log_std).
    pub fn own_param_count(&self) -> usize {
        match self {
            HeadSpec::Categorical { .. } => 0,
            HeadSpec::Gaussian { action_dims } => *action_dims,
        }
    }
}

/// Center of bin `idx` for one dimension.
pub fn bin_center(low: f64, high: f64, bins: usize, idx: usize) -> f64 {
    let width = (high - low) / bins as f64;
    low + (idx as f64 + 0.5) * width
}

/// Maps an action value to its bin; values outside `[low, high]` clamp to the
/// edge bin and report `clamped = true`.
pub fn bin_index(low: f64, high: f64, bins: usize, value: f64) -> (usize, bool) {
    if value < low {
        return (0, true);
    }
    if value > high {
        return (bins - 1, true);
    }
    let width = (high - low) / bins as f64;
    let idx = ((value - low) / width) as usize;
    (idx.min(bins - 1), false)
}

/// Per-example distribution parameters produced by a forward pass.
///
/// Carries the static bin geometry alongside the logits so sampling needs no
/// extra context.
#[derive(Debug, Clone)]
pub enum HeadOutputs {
    Categorical {
        /// `batch x (action_dims * bins_per_dim)`, dimension-major blocks.
        logits: Matrix,
        bins_per_dim: usize,
        low: Vec<f64>,
        high: Vec<f64>,
    },
    Gaussian {
        /// `batch x action_dims`.
        mean: Matrix,
        /// Shared across the batch (state-independent).
        log_std: Vec<f64>,
    },
}

impl HeadOutputs {
    pub fn batch_len(&self) -> usize {
        match self {
            HeadOutputs::Categorical { logits, .. } => logits.rows(),
            HeadOutputs::Gaussian { mean, .. } => mean.rows(),
        }
    }

    pub fn action_dims(&self) -> usize {
        match self {
            HeadOutputs::Categorical {
                logits,
                bins_per_dim,
                ..
            } => logits.cols() / bins_per_dim,
            HeadOutputs::Gaussian { mean, .. } => mean.cols(),
        }
    }
}

/// Loss value plus everything backprop needs from the head.
#[derive(Debug)]
pub struct NllResult {
    /// Mean negative log-likelihood over the batch.
    pub loss: f64,
    /// Gradient w.r.t. the output projection's pre-activations,
    /// `batch x output_dim`, already divided by the batch size.
    pub d_outputs: Matrix,
    /// Gradient w.r.t. the Gaussian log_std vector (None for categorical).
    pub d_log_std: Option<Vec<f64>>,
    /// How many action components fell outside the categorical range and
    /// were clamped to an edge bin.
    pub clamped: usize,
}

/// Mean NLL over a batch of `actions` (`batch x action_dims`, raw values)
/// with analytic gradients.
pub fn nll_loss(outputs: &HeadOutputs, actions: &Matrix) -> Result<NllResult> {
    if actions.rows() != outputs.batch_len() || actions.cols() != outputs.action_dims() {
        return Err(Error::ShapeMismatch(format!(
            "actions {}x{} vs head batch {} dims {}",
            actions.rows(),
            actions.cols(),
            outputs.batch_len(),
            outputs.action_dims()
        )));
    }
    let batch = actions.rows();
    let inv_batch = 1.0 / batch as f64;
    match outputs {
        HeadOutputs::Categorical {
            logits,
            bins_per_dim,
            low,
            high,
        } => {
            let bins = *bins_per_dim;
            let dims = actions.cols();
            let mut loss = 0.0;
            let mut d_logits = Matrix::zeros(batch, logits.cols());
            let mut clamped = 0;
            for b in 0..batch {
                for d in 0..dims {
                    let block = &logits.row(b)[d * bins..(d + 1) * bins];
                    let (target, was_clamped) =
                        bin_index(low[d], high[d], bins, actions.get(b, d));
                    clamped += usize::from(was_clamped);
                    // Stable log-softmax cross-entropy.
                    let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum_exp: f64 = block.iter().map(|&z| (z - max).exp()).sum();
                    let lse = max + sum_exp.ln();
                    loss += (lse - block[target]) * inv_batch;
                    let d_block = &mut d_logits.row_mut(b)[d * bins..(d + 1) * bins];
                    for (i, g) in d_block.iter_mut().enumerate() {
                        let p = (block[i] - max).exp() / sum_exp;
                        *g = (p - f64::from(u8::from(i == target))) * inv_batch;
                    }
                }
            }
            if !loss.is_finite() {
                return Err(Error::Numeric("categorical NLL is not finite".into()));
            }
            Ok(NllResult {
                loss,
                d_outputs: d_logits,
                d_log_std: None,
                clamped,
            })
        }
        HeadOutputs::Gaussian { mean, log_std } => {
            let dims = actions.cols();
            let mut loss = 0.0;
            let mut d_mean = Matrix::zeros(batch, dims);
            let mut d_log_std = vec![0.0; dims];
            for b in 0..batch {
                for d in 0..dims {
                    let mu = mean.get(b, d);
                    let ell = log_std[d];
                    let inv_var = (-2.0 * ell).exp();
                    let diff = actions.get(b, d) - mu;
                    loss += (0.5 * diff * diff * inv_var + ell + HALF_LN_TAU) * inv_batch;
                    d_mean.set(b, d, -diff * inv_var * inv_batch);
                    d_log_std[d] += (1.0 - diff * diff * inv_var) * inv_batch;
                }
            }
            if !loss.is_finite() {
                return Err(Error::Numeric("Gaussian NLL is not finite".into()));
            }
            Ok(NllResult {
                loss,
                d_outputs: d_mean,
                d_log_std: Some(d_log_std),
                clamped: 0,
            })
        }
    }
}

/// How eval-time actions are drawn from the head distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Stochastic,
    Deterministic,
}

/// Draws an action vector for one example (`row`) of the batch.
///
/// Categorical: stochastic samples each dimension's softmax, deterministic
/// takes the argmax with ties broken toward the lowest bin index; either way
/// the bin index maps to its center value. Gaussian: stochastic is
/// `mean + std * z`, deterministic is the mean.
pub fn sample_action(
    outputs: &HeadOutputs,
    row: usize,
    mode: SampleMode,
    rng: &mut RvsRng,
) -> Vec<f64> {
    match outputs {
        HeadOutputs::Categorical {
            logits,
            bins_per_dim,
            low,
            high,
        } => {
            let bins = *bins_per_dim;
            let dims = logits.cols() / bins;
            let mut action = Vec::with_capacity(dims);
            for d in 0..dims {
                let block = &logits.row(row)[d * bins..(d + 1) * bins];
                let idx = match mode {
                    SampleMode::Deterministic => {
                        let mut best = 0;
                        for (i, &z) in block.iter().enumerate() {
                            if z > block[best] {
                                best = i;
                            }
                        }
                        best
                    }
                    SampleMode::Stochastic => {
                        let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let weights: Vec<f64> = block.iter().map(|&z| (z - max).exp()).collect();
                        let total: f64 = weights.iter().sum();
                        let mut u = rng.gen::<f64>() * total;
                        let mut chosen = bins - 1;
                        for (i, w) in weights.iter().enumerate() {
                            if u < *w {
                                chosen = i;
                                break;
                            }
                            u -= w;
                        }
                        chosen
                    }
                };
                action.push(bin_center(low[d], high[d], bins, idx));
            }
            action
        }
        HeadOutputs::Gaussian { mean, log_std } => {
            let dims = mean.cols();
            let mut action = Vec::with_capacity(dims);
            for d in 0..dims {
                let mu = mean.get(row, d);
                match mode {
                    SampleMode::Deterministic => action.push(mu),
                    SampleMode::Stochastic => {
                        action.push(mu + log_std[d].exp() * standard_normal(rng))
                    }
                }
            }
            action
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn discrete_spec_centers_bins_on_integers() {
        let spec = HeadSpec::discrete(4);
        let HeadSpec::Categorical {
            bins_per_dim,
            low,
            high,
            ..
        } = &spec
        else {
            panic!("expected categorical")
        };
        for k in 0..4 {
            assert_eq!(bin_center(low[0], high[0], *bins_per_dim, k), k as f64);
        }
        assert_eq!(spec.output_dim(), 4);
    }

    #[test]
    fn bin_index_maps_and_clamps() {
        // 15 bins over [-1, 1].
        assert_eq!(bin_index(-1.0, 1.0, 15, -1.0), (0, false));
        assert_eq!(bin_index(-1.0, 1.0, 15, 1.0), (14, false));
        assert_eq!(bin_index(-1.0, 1.0, 15, 0.0), (7, false)); // middle bin
        assert_eq!(bin_index(-1.0, 1.0, 15, -1.2), (0, true));
        assert_eq!(bin_index(-1.0, 1.0, 15, 3.0), (14, true));
    }

    #[test]
    fn uniform_logits_loss_is_ln_bins() {
        // Uniform logits over 4 bins, one action dim: loss = ln 4.
        let outputs = HeadOutputs::Categorical {
            logits: Matrix::zeros(1, 4),
            bins_per_dim: 4,
            low: vec![-0.5],
            high: vec![3.5],
        };
        let actions = Matrix::from_rows(&[vec![2.0]]);
        let r = nll_loss(&outputs, &actions).unwrap();
        assert!((r.loss - 4.0f64.ln()).abs() < 1e-12, "loss {}", r.loss);
        assert_eq!(r.clamped, 0);
        // Gradient: softmax(0) = 1/4 everywhere, minus one-hot at bin 2.
        let g = r.d_outputs.row(0);
        assert!((g[0] - 0.25).abs() < 1e-12);
        assert!((g[2] + 0.75).abs() < 1e-12);
    }

    #[test]
    fn standard_normal_at_mode_loss() {
        // mean 0, log_std 0, action 0 -> 0.5*ln(2*pi).
        let outputs = HeadOutputs::Gaussian {
            mean: Matrix::zeros(1, 1),
            log_std: vec![0.0],
        };
        let actions = Matrix::zeros(1, 1);
        let r = nll_loss(&outputs, &actions).unwrap();
        assert!((r.loss - 0.918_939).abs() < 1e-6, "loss {}", r.loss);
        // At the mode: d_mean = 0, d_log_std = 1 - 0 = 1.
        assert_eq!(r.d_outputs.get(0, 0), 0.0);
        assert!((r.d_log_std.unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_actions_clamp_and_count() {
        let outputs = HeadOutputs::Categorical {
            logits: Matrix::zeros(2, 6),
            bins_per_dim: 3,
            low: vec![0.0, 0.0],
            high: vec![1.0, 1.0],
        };
        let actions = Matrix::from_rows(&[vec![-0.5, 0.5], vec![2.0, 9.0]]);
        let r = nll_loss(&outputs, &actions).unwrap();
        assert_eq!(r.clamped, 3);
    }

    #[test]
    fn deterministic_sampling_rules() {
        let mut rng = stream(0, "sample", 0);
        // Dominant logit -> bin 0 center.
        let outputs = HeadOutputs::Categorical {
            logits: Matrix::from_rows(&[vec![10.0, 0.0, 0.0, 0.0]]),
            bins_per_dim: 4,
            low: vec![-0.5],
            high: vec![3.5],
        };
        assert_eq!(
            sample_action(&outputs, 0, SampleMode::Deterministic, &mut rng),
            vec![0.0]
        );
        // Equal logits -> bin 0 by the lowest-index tie-break.
        let ties = HeadOutputs::Categorical {
            logits: Matrix::zeros(1, 4),
            bins_per_dim: 4,
            low: vec![-0.5],
            high: vec![3.5],
        };
        assert_eq!(
            sample_action(&ties, 0, SampleMode::Deterministic, &mut rng),
            vec![0.0]
        );
        // Gaussian deterministic returns the mean exactly.
        let gauss = HeadOutputs::Gaussian {
            mean: Matrix::from_rows(&[vec![0.3, -0.2]]),
            log_std: vec![0.0, 0.0],
        };
        assert_eq!(
            sample_action(&gauss, 0, SampleMode::Deterministic, &mut rng),
            vec![0.3, -0.2]
        );
    }

    #[test]
    fn stochastic_categorical_tracks_softmax() {
        // Two bins with logit gap 1: p(bin1) = e/(1+e) ~ 0.731.
        let outputs = HeadOutputs::Categorical {
            logits: Matrix::from_rows(&[vec![0.0, 1.0]]),
            bins_per_dim: 2,
            low: vec![-0.5],
            high: vec![1.5],
        };
        let mut rng = stream(5, "sample", 0);
        let n = 20_000;
        let mut ones = 0;
        for _ in 0..n {
            if sample_action(&outputs, 0, SampleMode::Stochastic, &mut rng)[0] == 1.0 {
                ones += 1;
            }
        }
        let p = ones as f64 / n as f64;
        let want = std::f64::consts::E / (1.0 + std::f64::consts::E);
        assert!((p - want).abs() < 0.01, "p {p} want {want}");
    }

    proptest! {
        // Cross-entropy against any logits is non-negative.
        #[test]
        fn categorical_nll_non_negative(
            logits in proptest::collection::vec(-20.0f64..20.0, 6),
            a in 0.0f64..3.0,
        ) {
            let outputs = HeadOutputs::Categorical {
                logits: Matrix::from_rows(&[logits]),
                bins_per_dim: 6,
                low: vec![0.0],
                high: vec![3.0],
            };
            let r = nll_loss(&outputs, &Matrix::from_rows(&[vec![a]])).unwrap();
            prop_assert!(r.loss >= 0.0);
        }

        // With log_std clamped to >= LOG_STD_MIN, the per-dim NLL can never
        // fall below ln(sigma_min) + 0.5*ln(2*pi): the density's peak value.
        #[test]
        fn gaussian_nll_respects_clamped_floor(
            mu in -50.0f64..50.0,
            a in -50.0f64..50.0,
            ell in LOG_STD_MIN..LOG_STD_MAX,
        ) {
            let outputs = HeadOutputs::Gaussian {
                mean: Matrix::from_rows(&[vec![mu]]),
                log_std: vec![ell],
            };
            let r = nll_loss(&outputs, &Matrix::from_rows(&[vec![a]])).unwrap();
            let floor = LOG_STD_MIN + 0.918_938_533_204_672_7;
            prop_assert!(r.loss >= floor - 1e-12, "loss {} under floor {}", r.loss, floor);
        }
    }
}
