//! The policy network: two rectified hidden layers with inverted dropout,
//! an output projection, and an action head.
//!
//! Forward comes in two flavors. The inference path (`forward_eval`) is a
//! pure `&self` function so frozen snapshots can serve many rollout workers
//! concurrently. The training path threads explicit dropout masks through a
//! `ForwardTrace`, which both feeds backprop and lets the finite-difference
//! checker replay the identical stochastic network.

use rand::Rng;

use super::head::{nll_loss, HeadOutputs, HeadSpec, NllResult, LOG_STD_MAX, LOG_STD_MIN};
use super::layer::DenseLayer;
use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::rng::{stream, RvsRng};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    pub input_dim: usize,
    pub hidden_width: usize,
    /// Probability of dropping a hidden activation in training mode.
    pub dropout_p: f64,
    pub fc1: DenseLayer,
    pub fc2: DenseLayer,
    /// Output projection onto the head's parameter space.
    pub out: DenseLayer,
    pub head_spec: HeadSpec,
    /// Learned state-independent log-std (empty for categorical heads).
    pub log_std: Vec<f64>,
}

/// Multiplicative dropout masks for the two hidden layers; entries are
/// either `0` or the inverted-dropout scale `1/(1-p)`.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub mask1: Matrix,
    pub mask2: Matrix,
}

/// Everything backprop needs from one forward pass.
#[derive(Debug)]
pub struct ForwardTrace {
    /// Network input (states with conditions appended).
    pub x: Matrix,
    /// Pre-activations of the hidden layers (rectifier gates).
    pub z1: Matrix,
    pub z2: Matrix,
    /// Post-rectifier, post-dropout activations (inputs to the next layer).
    pub h1: Matrix,
    pub h2: Matrix,
    /// Masks used in this pass, if any.
    pub masks: Option<DropoutMasks>,
}

/// Parameter gradients in declaration order:
/// `[fc1.w, fc1.b, fc2.w, fc2.b, out.w, out.b, log_std?]`.
///
/// The same order defines parameter flattening for the optimizer and for
/// checkpoints.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|g| g.is_finite())
    }
}

fn relu(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// In place: `dh[i] = 0` wherever `z[i] <= 0` (rectifier gate).
fn gate_by_relu(dh: &mut Matrix, z: &Matrix) {
    for (g, &zi) in dh.data_mut().iter_mut().zip(z.data()) {
        if zi <= 0.0 {
            *g = 0.0;
        }
    }
}

fn apply_mask(m: &mut Matrix, mask: &Matrix) {
    for (v, &s) in m.data_mut().iter_mut().zip(mask.data()) {
        *v *= s;
    }
}

impl MlpPolicy {
    /// Fresh network: fan-in-uniform weights, zero biases, zero log-std.
    /// Identical `(seed, dims, head)` give bit-identical parameters.
    pub fn init(
        input_dim: usize,
        hidden_width: usize,
        head_spec: HeadSpec,
        dropout_p: f64,
        seed: u64,
    ) -> Result<Self> {
        if input_dim < 1 || hidden_width < 1 {
            return Err(Error::InvalidArgument(format!(
                "network dims must be >= 1, got input {input_dim}, width {hidden_width}"
            )));
        }
        if !(0.0..1.0).contains(&dropout_p) {
            return Err(Error::InvalidArgument(format!(
                "dropout_p must be in [0, 1), got {dropout_p}"
            )));
        }
        head_spec.validate()?;
        let mut rng = stream(seed, "mlp-init", 0);
        let fc1 = DenseLayer::init(input_dim, hidden_width, &mut rng);
        let fc2 = DenseLayer::init(hidden_width, hidden_width, &mut rng);
        let out = DenseLayer::init(hidden_width, head_spec.output_dim(), &mut rng);
        let log_std = vec![0.0; head_spec.own_param_count()];
        Ok(MlpPolicy {
            input_dim,
            hidden_width,
            dropout_p,
            fc1,
            fc2,
            out,
            head_spec,
            log_std,
        })
    }

    pub fn param_count(&self) -> usize {
        self.fc1.param_count() + self.fc2.param_count() + self.out.param_count() + self.log_std.len()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input width {} != network input_dim {}",
                x.cols(),
                self.input_dim
            )));
        }
        if !x.is_finite() {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        Ok(())
    }

    fn head_outputs(&self, projected: Matrix) -> HeadOutputs {
        match &self.head_spec {
            HeadSpec::Categorical {
                bins_per_dim,
                low,
                high,
                ..
            } => HeadOutputs::Categorical {
                logits: projected,
                bins_per_dim: *bins_per_dim,
                low: low.clone(),
                high: high.clone(),
            },
            HeadSpec::Gaussian { .. } => HeadOutputs::Gaussian {
                mean: projected,
                log_std: self.log_std.clone(),
            },
        }
    }

    /// Inference-mode forward: no dropout, no trace, pure in `&self`.
    pub fn forward_eval(&self, x: &Matrix) -> Result<HeadOutputs> {
        self.check_input(x)?;
        let h1 = relu(&self.fc1.forward(x));
        let h2 = relu(&self.fc2.forward(&h1));
        Ok(self.head_outputs(self.out.forward(&h2)))
    }

    /// Samples fresh dropout masks for a batch of the given size.
    /// Returns `None` when `dropout_p == 0` (dropout disabled).
    pub fn draw_masks(&self, batch: usize, rng: &mut RvsRng) -> Option<DropoutMasks> {
        if self.dropout_p == 0.0 {
            return None;
        }
        let scale = 1.0 / (1.0 - self.dropout_p);
        let mut draw = |rows: usize, cols: usize| {
            Matrix::from_fn(rows, cols, |_, _| {
                if rng.gen::<f64>() < self.dropout_p {
                    0.0
                } else {
                    scale
                }
            })
        };
        Some(DropoutMasks {
            mask1: draw(batch, self.hidden_width),
            mask2: draw(batch, self.hidden_width),
        })
    }

    /// Forward with explicit masks (`None` = no dropout). The trace returned
    /// alongside the outputs is what `backward` consumes; holding the masks
    /// fixed and calling this repeatedly makes the pass a deterministic
    /// function of the parameters, which the gradient checker relies on.
    pub fn forward_masked(
        &self,
        x: &Matrix,
        masks: Option<&DropoutMasks>,
    ) -> Result<(HeadOutputs, ForwardTrace)> {
        self.check_input(x)?;
        let z1 = self.fc1.forward(x);
        let mut h1 = relu(&z1);
        if let Some(m) = masks {
            apply_mask(&mut h1, &m.mask1);
        }
        let z2 = self.fc2.forward(&h1);
        let mut h2 = relu(&z2);
        if let Some(m) = masks {
            apply_mask(&mut h2, &m.mask2);
        }
        let projected = self.out.forward(&h2);
        let trace = ForwardTrace {
            x: x.clone(),
            z1,
            z2,
            h1,
            h2,
            masks: masks.cloned(),
        };
        Ok((self.head_outputs(projected), trace))
    }

    /// Training-mode forward: draws masks from `rng`, then runs the masked pass.
    pub fn forward_train(
        &self,
        x: &Matrix,
        rng: &mut RvsRng,
    ) -> Result<(HeadOutputs, ForwardTrace)> {
        let masks = self.draw_masks(x.rows(), rng);
        self.forward_masked(x, masks.as_ref())
    }

    /// Backprop through projection, dropout, rectifiers and hidden layers.
    pub fn backward(&self, trace: &ForwardTrace, nll: &NllResult) -> Gradients {
        let (dw3, db3, mut dh2) = self.out.backward(&trace.h2, &nll.d_outputs);
        if let Some(m) = &trace.masks {
            apply_mask(&mut dh2, &m.mask2);
        }
        gate_by_relu(&mut dh2, &trace.z2);
        let (dw2, db2, mut dh1) = self.fc2.backward(&trace.h1, &dh2);
        if let Some(m) = &trace.masks {
            apply_mask(&mut dh1, &m.mask1);
        }
        gate_by_relu(&mut dh1, &trace.z1);
        let (dw1, db1, _) = self.fc1.backward(&trace.x, &dh1);

        let mut blocks = vec![
            dw1.data().to_vec(),
            db1,
            dw2.data().to_vec(),
            db2,
            dw3.data().to_vec(),
            db3,
        ];
        if let Some(dls) = &nll.d_log_std {
            blocks.push(dls.clone());
        }
        Gradients { blocks }
    }

    /// One training-mode loss evaluation: forward with fresh masks, NLL,
    /// backprop. Returns `(loss, gradients, clamped_action_count)`.
    pub fn loss_and_grad(
        &self,
        x: &Matrix,
        actions: &Matrix,
        rng: &mut RvsRng,
    ) -> Result<(f64, Gradients, usize)> {
        let (outputs, trace) = self.forward_train(x, rng)?;
        let nll = nll_loss(&outputs, actions)?;
        let grads = self.backward(&trace, &nll);
        Ok((nll.loss, grads, nll.clamped))
    }

    /// Inference-mode mean NLL (validation loss): no dropout, no gradients.
    pub fn eval_loss(&self, x: &Matrix, actions: &Matrix) -> Result<f64> {
        let outputs = self.forward_eval(x)?;
        Ok(nll_loss(&outputs, actions)?.loss)
    }

    /// Parameter blocks in declaration order (see [`Gradients`]).
    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut blocks = vec![
            self.fc1.weights.data(),
            self.fc1.bias.as_slice(),
            self.fc2.weights.data(),
            self.fc2.bias.as_slice(),
            self.out.weights.data(),
            self.out.bias.as_slice(),
        ];
        if !self.log_std.is_empty() {
            blocks.push(self.log_std.as_slice());
        }
        blocks
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks = vec![
            self.fc1.weights.data_mut(),
            self.fc1.bias.as_mut_slice(),
            self.fc2.weights.data_mut(),
            self.fc2.bias.as_mut_slice(),
            self.out.weights.data_mut(),
            self.out.bias.as_mut_slice(),
        ];
        if !self.log_std.is_empty() {
            blocks.push(self.log_std.as_mut_slice());
        }
        blocks
    }

    /// Re-applies the log-std bounds; called after every optimizer step.
    pub fn clamp_log_std(&mut self) {
        for ell in &mut self.log_std {
            *ell = ell.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::head::SampleMode;

    fn gaussian_policy(dropout_p: f64, seed: u64) -> MlpPolicy {
        MlpPolicy::init(3, 4, HeadSpec::Gaussian { action_dims: 2 }, dropout_p, seed).unwrap()
    }

    #[test]
    fn init_zeroes_biases_and_log_std() {
        let p = gaussian_policy(0.0, 7);
        assert!(p.fc1.bias.iter().all(|&b| b == 0.0));
        assert!(p.fc2.bias.iter().all(|&b| b == 0.0));
        assert!(p.out.bias.iter().all(|&b| b == 0.0));
        assert_eq!(p.log_std, vec![0.0, 0.0]);
    }

    #[test]
    fn init_is_bit_deterministic() {
        assert_eq!(gaussian_policy(0.1, 7), gaussian_policy(0.1, 7));
        assert_ne!(gaussian_policy(0.1, 7), gaussian_policy(0.1, 8));
    }

    #[test]
    fn param_count_closed_form_at_width_256() {
        // input 3, width 256, Gaussian 2 dims:
        // 3*256+256 + 256*256+256 + 256*2+2 + 2 = 67,332.
        let p = MlpPolicy::init(3, 256, HeadSpec::Gaussian { action_dims: 2 }, 0.0, 0).unwrap();
        let want = 3 * 256 + 256 + 256 * 256 + 256 + 256 * 2 + 2 + 2;
        assert_eq!(want, 67_332);
        assert_eq!(p.param_count(), want);
        let from_blocks: usize = p.param_blocks().iter().map(|b| b.len()).sum();
        assert_eq!(from_blocks, want);
    }

    #[test]
    fn zero_weight_network_maps_to_zero_mean() {
        let mut p = gaussian_policy(0.0, 3);
        for block in p.param_blocks_mut() {
            block.fill(0.0);
        }
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5]]);
        let HeadOutputs::Gaussian { mean, .. } = p.forward_eval(&x).unwrap() else {
            panic!("expected Gaussian outputs")
        };
        assert_eq!(mean.data(), &[0.0, 0.0]);
    }

    #[test]
    fn dropout_zero_train_equals_eval() {
        let p = gaussian_policy(0.0, 11);
        let x = Matrix::from_rows(&[vec![0.2, -0.7, 1.1], vec![1.0, 0.0, -1.0]]);
        let mut rng = stream(0, "mask", 0);
        let (train_out, trace) = p.forward_train(&x, &mut rng).unwrap();
        assert!(trace.masks.is_none());
        let eval_out = p.forward_eval(&x).unwrap();
        let (HeadOutputs::Gaussian { mean: a, .. }, HeadOutputs::Gaussian { mean: b, .. }) =
            (train_out, eval_out)
        else {
            panic!("expected Gaussian outputs")
        };
        assert_eq!(a, b);
    }

    #[test]
    fn eval_forward_is_pure() {
        let p = gaussian_policy(0.5, 13);
        let x = Matrix::from_rows(&[vec![0.4, 0.4, -0.9]]);
        let HeadOutputs::Gaussian { mean: a, .. } = p.forward_eval(&x).unwrap() else {
            panic!()
        };
        let HeadOutputs::Gaussian { mean: b, .. } = p.forward_eval(&x).unwrap() else {
            panic!()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn inverted_dropout_preserves_expected_activation() {
        // Monte-Carlo check of the 1/(1-p) scaling: the mean post-dropout
        // hidden activation over many mask draws approaches the eval-mode
        // activation within 2%.
        let p = gaussian_policy(0.5, 17);
        let x = Matrix::from_rows(&[vec![0.9, -0.3, 0.6]]);
        let (_, clean) = p.forward_masked(&x, None).unwrap();
        let mut rng = stream(99, "mask", 0);
        let draws = 10_000;
        let mut mean_h1 = vec![0.0; p.hidden_width];
        for _ in 0..draws {
            let masks = p.draw_masks(1, &mut rng);
            let (_, trace) = p.forward_masked(&x, masks.as_ref()).unwrap();
            for (acc, &h) in mean_h1.iter_mut().zip(trace.h1.row(0)) {
                *acc += h / draws as f64;
            }
        }
        for (j, (&got, &want)) in mean_h1.iter().zip(clean.h1.row(0)).enumerate() {
            if want.abs() > 1e-6 {
                assert!(
                    (got - want).abs() <= 0.02 * want.abs(),
                    "unit {j}: mean {got} vs eval {want}"
                );
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = gaussian_policy(0.0, 1);
        let wrong_width = Matrix::zeros(1, 5);
        assert!(matches!(
            p.forward_eval(&wrong_width),
            Err(Error::ShapeMismatch(_))
        ));
        let mut nan = Matrix::zeros(1, 3);
        nan.set(0, 1, f64::NAN);
        assert!(matches!(p.forward_eval(&nan), Err(Error::Numeric(_))));
        assert!(MlpPolicy::init(0, 4, HeadSpec::Gaussian { action_dims: 2 }, 0.0, 0).is_err());
        assert!(MlpPolicy::init(3, 4, HeadSpec::Gaussian { action_dims: 2 }, 1.0, 0).is_err());
    }

    #[test]
    fn categorical_policy_samples_valid_bin_centers() {
        let p = MlpPolicy::init(4, 8, HeadSpec::discrete(4), 0.0, 5).unwrap();
        let x = Matrix::from_rows(&[vec![0.1, 0.2, 0.3, 0.4]]);
        let outputs = p.forward_eval(&x).unwrap();
        let mut rng = stream(1, "sample", 0);
        for _ in 0..50 {
            let a = crate::nn::head::sample_action(&outputs, 0, SampleMode::Stochastic, &mut rng);
            assert_eq!(a.len(), 1);
            assert!([0.0, 1.0, 2.0, 3.0].contains(&a[0]), "got {}", a[0]);
        }
    }
}
