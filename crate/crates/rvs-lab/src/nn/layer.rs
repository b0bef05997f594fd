//! One fully connected layer: `z = x . W^T + b`.
//!
//! Layers are stateless between calls; the activations a backward pass needs
//! are carried in the policy's forward trace, which keeps inference-mode
//! forward shareable across threads (`&self`) and lets the gradient checker
//! replay a pass with frozen dropout masks.

use rand::Rng;

use super::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`, row per output unit.
    pub weights: Matrix,
    /// One bias per output unit.
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// Fan-in-scaled uniform init: weights from `U[-sqrt(6/in), +sqrt(6/in)]`,
    /// biases zero. Variance-preserving under the rectifier.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        assert!(in_dim >= 1 && out_dim >= 1, "layer dims must be >= 1");
        let bound = (6.0 / in_dim as f64).sqrt();
        let mut weights = Matrix::zeros(out_dim, in_dim);
        // Row-major fill order is part of the determinism contract: the same
        // (seed, dims) must reproduce bit-identical parameters.
        for v in weights.data_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
        DenseLayer {
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    /// Pre-activation output for a batch: `z = x . W^T + b`.
    pub fn forward(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.in_dim(), "input width != layer fan-in");
        let mut z = x.matmul_nt(&self.weights);
        z.add_row_broadcast(&self.bias);
        z
    }

    /// Gradients given the layer's input `x` and the upstream gradient `dz`
    /// w.r.t. this layer's pre-activation. Returns `(d_weights, d_bias, d_x)`.
    pub fn backward(&self, x: &Matrix, dz: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
        assert_eq!(dz.cols(), self.out_dim(), "dz width != layer fan-out");
        assert_eq!(x.rows(), dz.rows(), "batch size mismatch");
        let d_weights = dz.matmul_tn(x);
        let mut d_bias = vec![0.0; self.out_dim()];
        for r in 0..dz.rows() {
            for (db, g) in d_bias.iter_mut().zip(dz.row(r)) {
                *db += g;
            }
        }
        let d_x = dz.matmul_nn(&self.weights);
        (d_weights, d_bias, d_x)
    }
}
