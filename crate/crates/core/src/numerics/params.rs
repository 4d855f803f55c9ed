//! Named parameter tensors, Xavier initialization and flat views used by
//! the optimizer, gradient checker and checkpoint container.

use rand::Rng;

use super::{Matrix, RngStream};
use crate::error::{shape_err, Result};
use crate::numerics::matrix::ensure_nonzero_dims;

/// A model whose trainable state is a fixed, ordered list of named tensors.
///
/// Gradients use the same type as the model, so a zeroed clone doubles as a
/// gradient accumulator.
pub trait Parameterized {
    fn params(&self) -> Vec<(String, &Matrix)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|(_, m)| m.len()).sum()
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut g = self.clone();
        for (_, m) in g.params_mut() {
            m.fill(0.0);
        }
        g
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) -> Result<()>
    where
        Self: Sized,
    {
        let src = other.params();
        let dst = self.params_mut();
        if src.len() != dst.len() {
            return Err(shape_err!("parameter lists differ in length"));
        }
        for ((_, d), (_, s)) in dst.into_iter().zip(src) {
            d.add_assign(s)?;
        }
        Ok(())
    }

    fn scale_all(&mut self, s: f64) {
        for (_, m) in self.params_mut() {
            m.scale(s);
        }
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, m) in self.params() {
            out.extend_from_slice(m.data());
        }
        out
    }

    fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.params().iter().map(|(_, m)| m.len()).sum();
        if values.len() != total {
            return Err(shape_err!(
                "{} values for {} parameters",
                values.len(),
                total
            ));
        }
        let mut offset = 0;
        for (_, m) in self.params_mut() {
            let n = m.len();
            m.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Replaces every tensor from a named list, requiring identical names
    /// and shapes in the same order.
    fn load_named(&mut self, tensors: &[(String, Matrix)]) -> Result<()> {
        let dst = self.params_mut();
        if dst.len() != tensors.len() {
            return Err(shape_err!(
                "expected {} tensors, found {}",
                dst.len(),
                tensors.len()
            ));
        }
        for ((name, d), (src_name, s)) in dst.into_iter().zip(tensors) {
            if &name != src_name {
                return Err(shape_err!("expected tensor '{name}', found '{src_name}'"));
            }
            if d.shape() != s.shape() {
                return Err(shape_err!(
                    "tensor '{name}': expected {}x{}, found {}x{}",
                    d.rows(),
                    d.cols(),
                    s.rows(),
                    s.cols()
                ));
            }
            d.data_mut().copy_from_slice(s.data());
        }
        Ok(())
    }

    fn named_tensors(&self) -> Vec<(String, Matrix)> {
        self.params()
            .into_iter()
            .map(|(n, m)| (n, m.clone()))
            .collect()
    }
}

/// Prefixes child parameter names with `prefix.`.
pub fn prefixed<'a>(prefix: &str, items: Vec<(String, &'a Matrix)>) -> Vec<(String, &'a Matrix)> {
    items
        .into_iter()
        .map(|(n, m)| (format!("{prefix}.{n}"), m))
        .collect()
}

pub fn prefixed_mut<'a>(
    prefix: &str,
    items: Vec<(String, &'a mut Matrix)>,
) -> Vec<(String, &'a mut Matrix)> {
    items
        .into_iter()
        .map(|(n, m)| (format!("{prefix}.{n}"), m))
        .collect()
}

/// Half-width of the Xavier-uniform interval for a `rows x cols` weight.
pub fn xavier_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Xavier-uniform weights with `fan_in = cols`, `fan_out = rows`, drawn from
/// a fresh generator for `stream`.
pub fn init_uniform(rows: usize, cols: usize, stream: &RngStream) -> Result<Matrix> {
    ensure_nonzero_dims(rows, cols)?;
    let mut rng = stream.rng();
    Ok(xavier_uniform(rows, cols, &mut rng))
}

pub(crate) fn xavier_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = xavier_bound(rows, cols);
    let mut m = Matrix::zeros(rows, cols);
    for x in m.data_mut() {
        *x = rng.random_range(-bound..=bound);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let s = RngStream::new(11, "w");
        let a = init_uniform(8, 5, &s).unwrap();
        let b = init_uniform(8, 5, &s).unwrap();
        assert_eq!(a.data(), b.data());
        let bound = xavier_bound(8, 5);
        assert!(a.data().iter().all(|x| x.abs() <= bound));
        assert!(init_uniform(0, 3, &s).is_err());
        assert!(init_uniform(3, 0, &s).is_err());
    }

    #[test]
    fn large_sample_mean_is_centered() {
        let m = init_uniform(1000, 1000, &RngStream::new(3, "big")).unwrap();
        let n = m.len() as f64;
        let mean = m.data().iter().sum::<f64>() / n;
        // Uniform(-a, a) has variance a^2 / 3.
        let a = xavier_bound(1000, 1000);
        let se = (a * a / 3.0 / n).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} vs se {se}");
    }
}
