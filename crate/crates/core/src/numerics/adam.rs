//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::{Matrix, Parameterized};
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Self {
        AdamState {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            config,
        }
    }
}

/// One Adam update of `params` in place. `name` identifies the tensor in
/// error messages.
pub fn adam_step(
    params: &mut Matrix,
    grads: &Matrix,
    state: &mut AdamState,
    name: &str,
) -> Result<()> {
    if params.shape() != grads.shape() || params.shape() != state.m.shape() {
        return Err(shape_err!(
            "adam '{name}': params {:?}, grads {:?}, state {:?}",
            params.shape(),
            grads.shape(),
            state.m.shape()
        ));
    }
    if let Some(index) = grads.first_non_finite() {
        return Err(Error::NonFinite {
            context: format!("gradient of '{name}'"),
            index,
        });
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (((p, &g), mi), vi) in params
        .data_mut()
        .iter_mut()
        .zip(grads.data())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *mi = beta1 * *mi + (1.0 - beta1) * g;
        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over every tensor of a [`Parameterized`] model.
#[derive(Clone, Debug)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new<M: Parameterized>(model: &M, config: AdamConfig) -> Self {
        Adam {
            states: model
                .params()
                .iter()
                .map(|(_, p)| AdamState::new(p.rows(), p.cols(), config))
                .collect(),
        }
    }

    pub fn step<M: Parameterized>(&mut self, model: &mut M, grads: &M) -> Result<()> {
        let g = grads.params();
        let p = model.params_mut();
        if g.len() != p.len() || p.len() != self.states.len() {
            return Err(shape_err!("optimizer built for a different model"));
        }
        for (((name, param), (_, grad)), state) in p.into_iter().zip(g).zip(&mut self.states) {
            adam_step(param, grad, state, &name)?;
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }
}
