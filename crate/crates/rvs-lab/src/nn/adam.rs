//! Bias-corrected Adam over the policy's parameter blocks.

use super::policy::{Gradients, MlpPolicy};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment accumulators mirroring the parameter blocks, plus the
/// step counter used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new_for(policy: &MlpPolicy) -> Self {
        Self::from_block_lens(&policy.param_blocks().iter().map(|b| b.len()).collect::<Vec<_>>())
    }

    pub fn from_block_lens(lens: &[usize]) -> Self {
        AdamState {
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Moment blocks, exposed for checkpointing.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Rebuilds a state from checkpointed moments.
    pub fn from_parts(m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, step: u64) -> Result<Self> {
        if m.len() != v.len() || m.iter().zip(&v).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::ShapeMismatch(
                "first/second moment blocks disagree".into(),
            ));
        }
        Ok(AdamState { m, v, step })
    }

    /// One Adam update over matching parameter/gradient blocks.
    ///
    /// Non-finite gradients abort before any state is touched, so a failed
    /// step leaves parameters, moments and the counter exactly as they were.
    pub fn update(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &Gradients,
        learning_rate: f64,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.blocks.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "block counts disagree: params {}, grads {}, moments {}",
                params.len(),
                grads.blocks.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&grads.blocks).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::ShapeMismatch(format!(
                    "block {i}: param len {}, grad len {}, moment len {}",
                    p.len(),
                    g.len(),
                    self.m[i].len()
                )));
            }
        }
        if !grads.is_finite() {
            return Err(Error::Numeric(
                "non-finite gradient; optimizer step aborted".into(),
            ));
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(&grads.blocks)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

/// Adam step over a whole policy, then re-clamp the Gaussian log-std.
pub fn adam_step(
    policy: &mut MlpPolicy,
    grads: &Gradients,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    state.update(&mut policy.param_blocks_mut(), grads, learning_rate)?;
    policy.clamp_log_std();
    Ok(())
}
