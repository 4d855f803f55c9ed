//! Central finite-difference gradient checker.

use crate::error::{shape_err, Error, Result};

pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Compares `analytic` with central differences of `f` around `params`.
///
/// Returns the max over parameters of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(shape_err!(
            "{} parameters but {} analytic gradients",
            params.len(),
            analytic.len()
        ));
    }
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + GRAD_CHECK_STEP;
        let plus = f(&probe)?;
        probe[i] = orig - GRAD_CHECK_STEP;
        let minus = f(&probe)?;
        probe[i] = orig;
        for v in [plus, minus] {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "grad_check objective".into(),
                    index: i,
                });
            }
        }
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        let a = analytic[i];
        let denom = 1f64.max(a.abs()).max(numeric.abs());
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
