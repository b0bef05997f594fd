//! Central-difference verification of the analytic gradients.
//!
//! The check replays the forward pass with the *same* dropout masks for
//! every perturbation, so even a stochastic training-mode network is a
//! deterministic function of its parameters while being probed.

use super::head::nll_loss;
use super::matrix::Matrix;
use super::policy::{DropoutMasks, MlpPolicy};
use crate::error::{Error, Result};

fn loss_with_masks(
    policy: &MlpPolicy,
    x: &Matrix,
    actions: &Matrix,
    masks: Option<&DropoutMasks>,
) -> Result<f64> {
    let (outputs, _) = policy.forward_masked(x, masks)?;
    Ok(nll_loss(&outputs, actions)?.loss)
}

/// Compares backprop against central differences over every parameter and
/// returns the worst relative error `|g_a - g_n| / max(1e-8, |g_a| + |g_n|)`.
///
/// Pass `masks = None` for an inference-mode check, or frozen masks for a
/// training-mode one.
pub fn gradient_check(
    policy: &MlpPolicy,
    x: &Matrix,
    actions: &Matrix,
    epsilon: f64,
    masks: Option<&DropoutMasks>,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be in (0, 1e-3], got {epsilon}"
        )));
    }
    let (outputs, trace) = policy.forward_masked(x, masks)?;
    let nll = nll_loss(&outputs, actions)?;
    let analytic = policy.backward(&trace, &nll);

    let mut probe = policy.clone();
    let mut max_rel_err: f64 = 0.0;
    for (block_idx, grad_block) in analytic.blocks.iter().enumerate() {
        for i in 0..grad_block.len() {
            let original = probe.param_blocks()[block_idx][i];
            probe.param_blocks_mut()[block_idx][i] = original + epsilon;
            let plus = loss_with_masks(&probe, x, actions, masks)?;
            probe.param_blocks_mut()[block_idx][i] = original - epsilon;
            let minus = loss_with_masks(&probe, x, actions, masks)?;
            probe.param_blocks_mut()[block_idx][i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let analytic_g = grad_block[i];
            let rel = (analytic_g - numeric).abs()
                / (analytic_g.abs() + numeric.abs()).max(1e-8);
            max_rel_err = max_rel_err.max(rel);
        }
    }
    Ok(max_rel_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::head::HeadSpec;
    use crate::nn::layer::DenseLayer;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    const TOL: f64 = 1e-4;
    const EPS: f64 = 1e-5;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = stream(seed, "batch", 0);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.5..1.5))
    }

    /// Moves biases off zero so no pre-activation sits exactly on the
    /// rectifier kink, where a central difference straddles the
    /// non-differentiable point and disagrees with backprop by construction.
    fn randomize_biases(policy: &mut MlpPolicy, seed: u64) {
        let mut rng = stream(seed, "bias-jitter", 0);
        for bias in [
            &mut policy.fc1.bias,
            &mut policy.fc2.bias,
            &mut policy.out.bias,
        ] {
            for b in bias.iter_mut() {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                *b = sign * rng.gen_range(0.05..0.2);
            }
        }
    }

    #[test]
    fn small_gaussian_net_passes() {
        let mut policy =
            MlpPolicy::init(3, 2, HeadSpec::Gaussian { action_dims: 2 }, 0.0, 21).unwrap();
        randomize_biases(&mut policy, 31);
        let x = random_batch(5, 3, 1);
        let actions = random_batch(5, 2, 2);
        let err = gradient_check(&policy, &x, &actions, EPS, None).unwrap();
        assert!(err <= TOL, "max rel err {err}");
    }

    #[test]
    fn small_categorical_net_passes() {
        let spec = HeadSpec::discretized_box(vec![-1.0, -1.0], vec![1.0, 1.0], 5);
        let mut policy = MlpPolicy::init(4, 3, spec, 0.0, 22).unwrap();
        randomize_biases(&mut policy, 32);
        let x = random_batch(6, 4, 3);
        let actions = random_batch(6, 2, 4);
        let err = gradient_check(&policy, &x, &actions, EPS, None).unwrap();
        assert!(err <= TOL, "max rel err {err}");
    }

    #[test]
    fn frozen_mask_dropout_passes() {
        let mut policy =
            MlpPolicy::init(3, 6, HeadSpec::Gaussian { action_dims: 1 }, 0.5, 23).unwrap();
        randomize_biases(&mut policy, 33);
        let x = random_batch(4, 3, 5);
        let actions = random_batch(4, 1, 6);
        let mut rng = stream(7, "mask", 0);
        let masks = policy.draw_masks(4, &mut rng);
        assert!(masks.is_some());
        let err = gradient_check(&policy, &x, &actions, EPS, masks.as_ref()).unwrap();
        assert!(err <= TOL, "max rel err {err}");
    }

    #[test]
    fn effectively_linear_net_matches_closed_form() {
        // Identity hidden layers and positive activations make the network
        // linear: mean = W x + b. The Gaussian NLL gradients then have the
        // textbook closed form, which must agree with backprop.
        let mut policy =
            MlpPolicy::init(2, 2, HeadSpec::Gaussian { action_dims: 1 }, 0.0, 0).unwrap();
        let eye = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        policy.fc1 = DenseLayer {
            weights: eye.clone(),
            bias: vec![0.0, 0.0],
        };
        policy.fc2 = DenseLayer {
            weights: eye,
            bias: vec![0.0, 0.0],
        };
        policy.out = DenseLayer {
            weights: Matrix::from_rows(&[vec![0.7, -0.4]]),
            bias: vec![0.1],
        };
        policy.log_std = vec![0.3];

        // Strictly positive inputs keep both rectifiers in their linear range.
        let x = Matrix::from_rows(&[vec![0.5, 1.0], vec![2.0, 0.25]]);
        let actions = Matrix::from_rows(&[vec![0.9], vec![-0.2]]);

        let (outputs, trace) = policy.forward_masked(&x, None).unwrap();
        let nll = nll_loss(&outputs, &actions).unwrap();
        let grads = policy.backward(&trace, &nll);

        let inv_var = (-2.0f64 * 0.3).exp();
        let batch = 2.0;
        let mut want_dw = [0.0, 0.0];
        let mut want_db = 0.0;
        let mut want_dls = 0.0;
        for b in 0..2 {
            let mu = 0.7 * x.get(b, 0) - 0.4 * x.get(b, 1) + 0.1;
            let diff = mu - actions.get(b, 0);
            want_dw[0] += inv_var * diff * x.get(b, 0) / batch;
            want_dw[1] += inv_var * diff * x.get(b, 1) / batch;
            want_db += inv_var * diff / batch;
            want_dls += (1.0 - diff * diff * inv_var) / batch;
        }
        // Blocks: [fc1.w, fc1.b, fc2.w, fc2.b, out.w, out.b, log_std].
        let dw = &grads.blocks[4];
        let db = &grads.blocks[5];
        let dls = &grads.blocks[6];
        assert!((dw[0] - want_dw[0]).abs() < 1e-12, "{} vs {}", dw[0], want_dw[0]);
        assert!((dw[1] - want_dw[1]).abs() < 1e-12);
        assert!((db[0] - want_db).abs() < 1e-12);
        assert!((dls[0] - want_dls).abs() < 1e-12);

        let err = gradient_check(&policy, &x, &actions, EPS, None).unwrap();
        assert!(err <= TOL, "max rel err {err}");
    }

    #[test]
    fn epsilon_out_of_range_is_rejected() {
        let policy =
            MlpPolicy::init(2, 2, HeadSpec::Gaussian { action_dims: 1 }, 0.0, 0).unwrap();
        let x = random_batch(1, 2, 0);
        let a = random_batch(1, 1, 1);
        assert!(gradient_check(&policy, &x, &a, 0.0, None).is_err());
        assert!(gradient_check(&policy, &x, &a, 1e-2, None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        // Any random small network, either head, with or without dropout,
        // must verify to 1e-4 at epsilon 1e-5.
        #[test]
        fn random_networks_verify(
            seed in 0u64..1_000,
            width in 1usize..32,
            batch in 1usize..16,
            gaussian in proptest::bool::ANY,
            dropout in proptest::bool::ANY,
        ) {
            let dims = 2;
            let spec = if gaussian {
                HeadSpec::Gaussian { action_dims: dims }
            } else {
                HeadSpec::discretized_box(vec![-1.0; dims], vec![1.0; dims], 4)
            };
            let p = if dropout { 0.3 } else { 0.0 };
            let mut policy = MlpPolicy::init(3, width, spec, p, seed).unwrap();
            let x = random_batch(batch, 3, seed ^ 0xabc);
            let actions = random_batch(batch, dims, seed ^ 0xdef);
            let masks = if dropout {
                policy.draw_masks(batch, &mut stream(seed, "mask", 1))
            } else {
                None
            };
            // Re-jitter the biases until every pre-activation clears the
            // rectifier kink by a wide margin relative to the probe
            // epsilon. A unit sitting within ~epsilon of zero makes the
            // central difference straddle the kink and disagree with
            // backprop by construction, which is a property of ReLU, not
            // a gradient bug.
            let mut jitter = 0u64;
            loop {
                randomize_biases(&mut policy, seed ^ 0x5a5a ^ (jitter * 0x9e37));
                let (_, trace) = policy.forward_masked(&x, masks.as_ref()).unwrap();
                let clearance = trace
                    .z1
                    .data()
                    .iter()
                    .chain(trace.z2.data())
                    .fold(f64::INFINITY, |m, z| m.min(z.abs()));
                if clearance > 1e-3 {
                    break;
                }
                jitter += 1;
                prop_assume!(jitter < 32);
            }
            let err = gradient_check(&policy, &x, &actions, EPS, masks.as_ref()).unwrap();
            prop_assert!(err <= TOL, "max rel err {}", err);
        }
    }
}
