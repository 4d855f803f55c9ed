//! The two forecasters. Both run an LSTM over the input window from a zero
//! state and read out of the final hidden state only.
//!
//! - [`StatelessForecaster`]: one pass emits the whole `L_out x C` block.
//! - [`RecursiveForecaster`]: one pass emits one time point; the window then
//!   drops its first row and appends the prediction, and the pass repeats.

use serde::{Deserialize, Serialize};

use super::lstm::{lstm_backward, lstm_forward, LstmParams, LstmTrace};
use crate::error::{invalid, shape_err, Result};
use crate::numerics::{prefixed, prefixed_mut, Linear, Matrix, Parameterized, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMode {
    Stateless,
    Recursive,
}

impl ForecastMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ForecastMode::Stateless => "stateless",
            ForecastMode::Recursive => "recursive",
        }
    }
}

impl std::fmt::Display for ForecastMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ForecastMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stateless" => Ok(ForecastMode::Stateless),
            "recursive" => Ok(ForecastMode::Recursive),
            other => Err(invalid!("unknown forecaster mode '{other}' (stateless|recursive)")),
        }
    }
}

fn check_window(window: &Matrix, input_len: usize, channels: usize) -> Result<()> {
    if window.shape() != (input_len, channels) {
        return Err(shape_err!(
            "forecaster expects a {input_len}x{channels} window, got {}x{}",
            window.rows(),
            window.cols()
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatelessForecaster {
    pub cell: LstmParams,
    /// `H -> horizon * C`
    pub head: Linear,
    pub input_len: usize,
    pub horizon: usize,
}

impl StatelessForecaster {
    pub fn new(channels: usize, hidden: usize, input_len: usize, horizon: usize, stream: &RngStream) -> Self {
        StatelessForecaster {
            cell: LstmParams::new(channels, hidden, &stream.child("cell")),
            head: Linear::new(hidden, horizon * channels, &stream.child("head")),
            input_len,
            horizon,
        }
    }

    pub fn zeros(channels: usize, hidden: usize, input_len: usize, horizon: usize) -> Self {
        StatelessForecaster {
            cell: LstmParams::zeros(channels, hidden),
            head: Linear::zeros(hidden, horizon * channels),
            input_len,
            horizon,
        }
    }

    pub fn channels(&self) -> usize {
        self.cell.input_dim()
    }

    /// `L_in x C` window → `horizon x C` block.
    pub fn forecast(&self, window: &Matrix) -> Result<Matrix> {
        check_window(window, self.input_len, self.channels())?;
        let trace = lstm_forward(&self.cell, window)?;
        let out = self.head.forward(trace.final_hidden())?;
        Matrix::from_vec(self.horizon, self.channels(), out)
    }

    /// MSE against `target`; gradients are added into `grads`.
    pub fn loss_and_grad(&self, window: &Matrix, target: &Matrix, grads: &mut Self) -> Result<f64> {
        check_window(window, self.input_len, self.channels())?;
        target.ensure_shape(self.horizon, self.channels(), "stateless target")?;
        let trace = lstm_forward(&self.cell, window)?;
        let h_last = trace.final_hidden();
        let pred = self.head.forward(h_last)?;
        let n = pred.len() as f64;
        let mut loss = 0.0;
        let dy: Vec<f64> = pred
            .iter()
            .zip(target.data())
            .map(|(p, t)| {
                loss += (p - t) * (p - t);
                2.0 * (p - t) / n
            })
            .collect();
        let dh = self.head.backward(h_last, &dy, &mut grads.head);
        let mut d_hidden = Matrix::zeros(window.rows(), self.cell.hidden());
        d_hidden.row_mut(window.rows() - 1).copy_from_slice(&dh);
        lstm_backward(&self.cell, &trace, &d_hidden, &mut grads.cell)?;
        Ok(loss / n)
    }

    pub fn loss(&self, window: &Matrix, target: &Matrix) -> Result<f64> {
        crate::numerics::mse(&self.forecast(window)?, target)
    }
}

impl Parameterized for StatelessForecaster {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut v = prefixed("cell", self.cell.params());
        v.extend(prefixed("head", self.head.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut v = prefixed_mut("cell", self.cell.params_mut());
        v.extend(prefixed_mut("head", self.head.params_mut()));
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecursiveForecaster {
    pub cell: LstmParams,
    /// `H -> C`
    pub head: Linear,
    pub input_len: usize,
}

/// Forward record of a recursive rollout, kept for backpropagation.
struct Rollout {
    traces: Vec<LstmTrace>,
    preds: Vec<Vec<f64>>,
}

impl RecursiveForecaster {
    pub fn new(channels: usize, hidden: usize, input_len: usize, stream: &RngStream) -> Self {
        RecursiveForecaster {
            cell: LstmParams::new(channels, hidden, &stream.child("cell")),
            head: Linear::new(hidden, channels, &stream.child("head")),
            input_len,
        }
    }

    pub fn zeros(channels: usize, hidden: usize, input_len: usize) -> Self {
        RecursiveForecaster {
            cell: LstmParams::zeros(channels, hidden),
            head: Linear::zeros(hidden, channels),
            input_len,
        }
    }

    pub fn channels(&self) -> usize {
        self.cell.input_dim()
    }

    /// One time point from one window.
    pub fn predict_next(&self, window: &Matrix) -> Result<Vec<f64>> {
        check_window(window, self.input_len, self.channels())?;
        let trace = lstm_forward(&self.cell, window)?;
        self.head.forward(trace.final_hidden())
    }

    fn rollout(&self, window: &Matrix, steps: usize) -> Result<Rollout> {
        check_window(window, self.input_len, self.channels())?;
        if steps == 0 {
            return Err(invalid!("recursive forecast needs at least one step"));
        }
        let mut current = window.clone();
        let mut traces = Vec::with_capacity(steps);
        let mut preds = Vec::with_capacity(steps);
        for _ in 0..steps {
            let trace = lstm_forward(&self.cell, &current)?;
            let y = self.head.forward(trace.final_hidden())?;
            // T[1:] followed by the new point
            let cols = current.cols();
            current.data_mut().copy_within(cols.., 0);
            let last = current.rows() - 1;
            current.row_mut(last).copy_from_slice(&y);
            traces.push(trace);
            preds.push(y);
        }
        Ok(Rollout { traces, preds })
    }

    /// `steps x C` forecast, each point fed back into the window.
    pub fn forecast(&self, window: &Matrix, steps: usize) -> Result<Matrix> {
        let r = self.rollout(window, steps)?;
        Matrix::from_vec(steps, self.channels(), r.preds.concat())
    }

    /// Mean over the `target.rows()` rollout steps of the per-step MSE, with
    /// gradients flowing through the fed-back predictions.
    pub fn loss_and_grad(&self, window: &Matrix, target: &Matrix, grads: &mut Self) -> Result<f64> {
        let steps = target.rows();
        let c = self.channels();
        target.ensure_shape(steps, c, "recursive target")?;
        let r = self.rollout(window, steps)?;
        let l_in = self.input_len;
        let scale = 2.0 / (steps * c) as f64;
        let mut loss = 0.0;
        // dL/d(pred_k), completed from later passes before pass k is reversed
        let mut d_pred: Vec<Vec<f64>> = r
            .preds
            .iter()
            .enumerate()
            .map(|(k, p)| {
                p.iter()
                    .zip(target.row(k))
                    .map(|(a, b)| {
                        loss += (a - b) * (a - b);
                        scale * (a - b)
                    })
                    .collect()
            })
            .collect();
        let mut d_hidden = Matrix::zeros(l_in, self.cell.hidden());
        for k in (0..steps).rev() {
            let trace = &r.traces[k];
            let dh = self.head.backward(trace.final_hidden(), &d_pred[k], &mut grads.head);
            d_hidden.fill(0.0);
            d_hidden.row_mut(l_in - 1).copy_from_slice(&dh);
            let dx = lstm_backward(&self.cell, trace, &d_hidden, &mut grads.cell)?;
            // window row `row` of pass k holds pred[row + k - l_in] when that index is >= 0
            for row in l_in.saturating_sub(k)..l_in {
                let j = row + k - l_in;
                for (d, v) in d_pred[j].iter_mut().zip(dx.row(row)) {
                    *d += v;
                }
            }
        }
        Ok(loss / (steps * c) as f64)
    }

    pub fn loss(&self, window: &Matrix, target: &Matrix) -> Result<f64> {
        let pred = self.forecast(window, target.rows())?;
        crate::numerics::mse(&pred, target)
    }
}

impl Parameterized for RecursiveForecaster {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut v = prefixed("cell", self.cell.params());
        v.extend(prefixed("head", self.head.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut v = prefixed_mut("cell", self.cell.params_mut());
        v.extend(prefixed_mut("head", self.head.params_mut()));
        v
    }
}

/// Either forecaster, as stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum Forecaster {
    Stateless(StatelessForecaster),
    Recursive(RecursiveForecaster),
}

impl Forecaster {
    pub fn new(mode: ForecastMode, channels: usize, hidden: usize, input_len: usize, horizon: usize, stream: &RngStream) -> Self {
        match mode {
            ForecastMode::Stateless => {
                Forecaster::Stateless(StatelessForecaster::new(channels, hidden, input_len, horizon, stream))
            }
            ForecastMode::Recursive => {
                Forecaster::Recursive(RecursiveForecaster::new(channels, hidden, input_len, stream))
            }
        }
    }

    pub fn mode(&self) -> ForecastMode {
        match self {
            Forecaster::Stateless(_) => ForecastMode::Stateless,
            Forecaster::Recursive(_) => ForecastMode::Recursive,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Forecaster::Stateless(m) => m.channels(),
            Forecaster::Recursive(m) => m.channels(),
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Forecaster::Stateless(m) => m.input_len,
            Forecaster::Recursive(m) => m.input_len,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            Forecaster::Stateless(m) => m.cell.hidden(),
            Forecaster::Recursive(m) => m.cell.hidden(),
        }
    }

    /// Steps a stateless model emits per pass; 1 for the recursive model.
    pub fn block_len(&self) -> usize {
        match self {
            Forecaster::Stateless(m) => m.horizon,
            Forecaster::Recursive(_) => 1,
        }
    }

    pub fn check_steps(&self, steps: usize) -> Result<()> {
        if steps == 0 {
            return Err(invalid!("forecast steps must be at least 1"));
        }
        let b = self.block_len();
        if steps % b != 0 {
            return Err(invalid!(
                "a stateless forecaster extends in blocks of {b}; {steps} steps is not a multiple"
            ));
        }
        Ok(())
    }

    /// Forecasts `steps` points past `window`. Stateless models chain whole
    /// blocks, feeding each block back as the new window tail.
    pub fn extend(&self, window: &Matrix, steps: usize) -> Result<Matrix> {
        self.check_steps(steps)?;
        match self {
            Forecaster::Recursive(m) => m.forecast(window, steps),
            Forecaster::Stateless(m) => {
                let mut current = window.clone();
                let mut out: Option<Matrix> = None;
                for _ in 0..steps / m.horizon {
                    let block = m.forecast(&current)?;
                    current = current.slice_rows(m.horizon, m.input_len).vstack(&block)?;
                    out = Some(match out {
                        None => block,
                        Some(acc) => acc.vstack(&block)?,
                    });
                }
                Ok(out.expect("at least one block"))
            }
        }
    }

    pub fn loss_and_grad(&self, window: &Matrix, target: &Matrix, grads: &mut Self) -> Result<f64> {
        match (self, grads) {
            (Forecaster::Stateless(m), Forecaster::Stateless(g)) => m.loss_and_grad(window, target, g),
            (Forecaster::Recursive(m), Forecaster::Recursive(g)) => m.loss_and_grad(window, target, g),
            _ => Err(shape_err!("gradient buffer is for the other forecaster mode")),
        }
    }

    pub fn loss(&self, window: &Matrix, target: &Matrix) -> Result<f64> {
        match self {
            Forecaster::Stateless(m) => m.loss(window, target),
            Forecaster::Recursive(m) => m.loss(window, target),
        }
    }
}

impl Parameterized for Forecaster {
    fn params(&self) -> Vec<(String, &Matrix)> {
        match self {
            Forecaster::Stateless(m) => m.params(),
            Forecaster::Recursive(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        match self {
            Forecaster::Stateless(m) => m.params_mut(),
            Forecaster::Recursive(m) => m.params_mut(),
        }
    }
}
