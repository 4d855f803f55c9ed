//! Elementwise activations, softmax and the two regression losses.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{invalid, shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Applies `kind` elementwise. Fails on the first non-finite input entry.
pub fn activation(kind: Activation, x: &Matrix) -> Result<Matrix> {
    x.ensure_finite("activation input")?;
    Ok(x.map(|v| kind.apply(v)))
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(invalid!("softmax of an empty vector"));
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "softmax input".into(),
            index,
        });
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Unchecked softmax used on hot paths; `v` must be finite and nonempty.
#[inline]
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = 1.0 / sum;
    v.iter_mut().for_each(|x| *x *= inv);
}

/// Backward pass of softmax: given `p = softmax(z)` and `dL/dp`, returns `dL/dz`.
#[inline]
pub fn softmax_backward(p: &[f64], dp: &[f64], dz: &mut [f64]) {
    let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    for ((d, &pi), &dpi) in dz.iter_mut().zip(p).zip(dp) {
        *d = pi * (dpi - inner);
    }
}

/// Mean over all entries of the squared difference.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(shape_err!(
            "mse of {}x{} against {}x{}",
            pred.rows(),
            pred.cols(),
            target.rows(),
            target.cols()
        ));
    }
    if pred.is_empty() {
        return Err(invalid!("mse of empty matrices"));
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Mean absolute difference.
pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(shape_err!(
            "mae of {} predictions against {} targets",
            pred.len(),
            target.len()
        ));
    }
    if pred.is_empty() {
        return Err(invalid!("mae of empty vectors"));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}
