use super::matrix::{gemv_acc, gemv_t_acc, outer_acc};
use super::params::xavier_uniform;
use super::{Matrix, Parameterized, RngStream};
use crate::error::{shape_err, Result};

/// Affine map `y = W x + b` with `W: out x in`, `b: out x 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Matrix,
    pub b: Matrix,
}

impl Linear {
    pub fn new(input: usize, output: usize, stream: &RngStream) -> Self {
        Linear {
            w: xavier_uniform(output, input, &mut stream.rng()),
            b: Matrix::zeros(output, 1),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            w: Matrix::zeros(output, input),
            b: Matrix::zeros(output, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(shape_err!(
                "linear layer takes {} inputs, got {}",
                self.input_dim(),
                x.len()
            ));
        }
        let mut y = self.b.data().to_vec();
        gemv_acc(&self.w, x, &mut y);
        Ok(y)
    }

    /// Row-wise forward over a batch of row vectors (`n x in` → `n x out`).
    pub fn forward_rows(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul_t(&self.w)?;
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(self.b.data()) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Linear) -> Vec<f64> {
        outer_acc(&mut grads.w, dy, x);
        for (g, d) in grads.b.data_mut().iter_mut().zip(dy) {
            *g += d;
        }
        let mut dx = vec![0.0; self.input_dim()];
        gemv_t_acc(&self.w, dy, &mut dx);
        dx
    }

    /// Batch version of [`Linear::backward`] for row-vector inputs.
    pub fn backward_rows(&self, x: &Matrix, dy: &Matrix, grads: &mut Linear) -> Result<Matrix> {
        grads.w.add_assign(&dy.t_matmul(x)?)?;
        for r in 0..dy.rows() {
            for (g, d) in grads.b.data_mut().iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        dy.matmul(&self.w)
    }
}

impl Parameterized for Linear {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![("w".into(), &mut self.w), ("b".into(), &mut self.b)]
    }
}
