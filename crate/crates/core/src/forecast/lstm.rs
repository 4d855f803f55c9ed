//! Single LSTM layer with hand-derived backpropagation through time.
//!
//! Gate blocks are stacked in the order `[input, forget, cell, output]`
//! along the rows of `w_x` (`4H x C`), `w_h` (`4H x H`) and `b` (`4H x 1`):
//!
//! ```text
//! i = s(a_i)  f = s(a_f)  g = tanh(a_g)  o = s(a_o),   a = W_x x_t + W_h h_{t-1} + b
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```

use crate::error::{shape_err, Result};
use crate::numerics::{
    gemv_acc, gemv_t_acc, outer_acc, prefixed, prefixed_mut, sigmoid, xavier_uniform, Matrix,
    Parameterized, RngStream,
};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Matrix,
}

impl LstmParams {
    pub fn new(input: usize, hidden: usize, stream: &RngStream) -> Self {
        LstmParams {
            w_x: xavier_uniform(4 * hidden, input, &mut stream.child("w_x").rng()),
            w_h: xavier_uniform(4 * hidden, hidden, &mut stream.child("w_h").rng()),
            b: Matrix::zeros(4 * hidden, 1),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_x: Matrix::zeros(4 * hidden, input),
            w_h: Matrix::zeros(4 * hidden, hidden),
            b: Matrix::zeros(4 * hidden, 1),
        }
    }

    #[inline]
    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.w_x.cols()
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden();
        if self.w_h.rows() != 4 * h || self.w_x.rows() != 4 * h || self.b.shape() != (4 * h, 1) {
            return Err(shape_err!("inconsistent LSTM parameter shapes"));
        }
        Ok(())
    }
}

impl Parameterized for LstmParams {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("w_x".into(), &self.w_x),
            ("w_h".into(), &self.w_h),
            ("b".into(), &self.b),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("w_x".into(), &mut self.w_x),
            ("w_h".into(), &mut self.w_h),
            ("b".into(), &mut self.b),
        ]
    }
}

/// Computes one step into the provided buffers. `gates` receives activated
/// gate values (`4H`).
#[inline]
fn cell_step(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    c: &mut [f64],
    h: &mut [f64],
    tanh_c: &mut [f64],
) {
    let hd = p.hidden();
    gates.copy_from_slice(p.b.data());
    gemv_acc(&p.w_x, x, gates);
    gemv_acc(&p.w_h, h_prev, gates);
    let (ifo, rest) = gates.split_at_mut(2 * hd);
    let (g, o) = rest.split_at_mut(hd);
    ifo.iter_mut().for_each(|v| *v = sigmoid(*v));
    g.iter_mut().for_each(|v| *v = v.tanh());
    o.iter_mut().for_each(|v| *v = sigmoid(*v));
    let (i, f) = ifo.split_at(hd);
    for k in 0..hd {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }
}

/// One recurrence step; returns `(h_t, c_t)`.
pub fn lstm_step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    p.check()?;
    let hd = p.hidden();
    if x.len() != p.input_dim() || h_prev.len() != hd || c_prev.len() != hd {
        return Err(shape_err!(
            "lstm_step: x {} (want {}), h {} c {} (want {hd})",
            x.len(),
            p.input_dim(),
            h_prev.len(),
            c_prev.len()
        ));
    }
    for (what, v) in [("input", x), ("hidden state", h_prev), ("cell state", c_prev)] {
        if let Some(index) = v.iter().position(|z| !z.is_finite()) {
            return Err(crate::Error::NonFinite {
                context: format!("lstm_step {what}"),
                index,
            });
        }
    }
    let mut gates = vec![0.0; 4 * hd];
    let (mut h, mut c, mut tc) = (vec![0.0; hd], vec![0.0; hd], vec![0.0; hd]);
    cell_step(p, x, h_prev, c_prev, &mut gates, &mut c, &mut h, &mut tc);
    Ok((h, c))
}

/// Everything the backward pass needs from a forward run.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    /// `L x C`
    pub inputs: Matrix,
    /// `L x 4H`, activated.
    gates: Matrix,
    /// `(L+1) x H`; row 0 is the initial state.
    cells: Matrix,
    hiddens: Matrix,
    /// `L x H`
    tanh_cells: Matrix,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    /// Hidden state after step `t` (0-based).
    pub fn hidden(&self, t: usize) -> &[f64] {
        self.hiddens.row(t + 1)
    }

    pub fn final_hidden(&self) -> &[f64] {
        self.hiddens.row(self.len())
    }

    pub fn final_cell(&self) -> &[f64] {
        self.cells.row(self.len())
    }

    /// All hidden states, `L x H`.
    pub fn hidden_states(&self) -> Matrix {
        self.hiddens.slice_rows(1, self.len() + 1)
    }
}

/// Runs the layer over `sequence` (`L x C`) from a zero initial state.
pub fn lstm_forward(p: &LstmParams, sequence: &Matrix) -> Result<LstmTrace> {
    p.check()?;
    let (l, c) = sequence.shape();
    if l == 0 {
        return Err(shape_err!("lstm_forward needs at least one time step"));
    }
    if c != p.input_dim() {
        return Err(shape_err!("lstm_forward: input has {c} features, layer expects {}", p.input_dim()));
    }
    sequence.ensure_finite("lstm input")?;
    let hd = p.hidden();
    let mut trace = LstmTrace {
        inputs: sequence.clone(),
        gates: Matrix::zeros(l, 4 * hd),
        cells: Matrix::zeros(l + 1, hd),
        hiddens: Matrix::zeros(l + 1, hd),
        tanh_cells: Matrix::zeros(l, hd),
    };
    let mut h = vec![0.0; hd];
    let mut cc = vec![0.0; hd];
    for t in 0..l {
        let (h_prev, c_prev) = (trace.hiddens.row(t).to_vec(), trace.cells.row(t).to_vec());
        cell_step(
            p,
            sequence.row(t),
            &h_prev,
            &c_prev,
            trace.gates.row_mut(t),
            &mut cc,
            &mut h,
            trace.tanh_cells.row_mut(t),
        );
        trace.cells.row_mut(t + 1).copy_from_slice(&cc);
        trace.hiddens.row_mut(t + 1).copy_from_slice(&h);
    }
    Ok(trace)
}

/// BPTT. `d_hidden` (`L x H`) holds dL/dh_t from everything above the layer;
/// parameter gradients are added into `grads`. Returns dL/dx (`L x C`).
pub fn lstm_backward(
    p: &LstmParams,
    trace: &LstmTrace,
    d_hidden: &Matrix,
    grads: &mut LstmParams,
) -> Result<Matrix> {
    let hd = p.hidden();
    let l = trace.len();
    if d_hidden.shape() != (l, hd) {
        return Err(shape_err!(
            "lstm_backward: upstream {}x{}, trace is {l}x{hd}",
            d_hidden.rows(),
            d_hidden.cols()
        ));
    }
    if trace.inputs.cols() != p.input_dim() || trace.gates.cols() != 4 * hd {
        return Err(shape_err!("lstm_backward: trace does not belong to these parameters"));
    }
    if grads.w_x.shape() != p.w_x.shape() || grads.w_h.shape() != p.w_h.shape() {
        return Err(shape_err!("lstm_backward: gradient buffer has the wrong shape"));
    }
    let mut dx = Matrix::zeros(l, p.input_dim());
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];
    for t in (0..l).rev() {
        let gates = trace.gates.row(t);
        let (i, rest) = gates.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (g, o) = rest.split_at(hd);
        let tc = trace.tanh_cells.row(t);
        let c_prev = trace.cells.row(t);
        let up = d_hidden.row(t);
        for k in 0..hd {
            let dh = up[k] + dh_next[k];
            let d_o = dh * tc[k];
            let dc = dc_next[k] + dh * o[k] * (1.0 - tc[k] * tc[k]);
            let di = dc * g[k];
            let dg = dc * i[k];
            let df = dc * c_prev[k];
            dc_next[k] = dc * f[k];
            dz[k] = di * i[k] * (1.0 - i[k]);
            dz[hd + k] = df * f[k] * (1.0 - f[k]);
            dz[2 * hd + k] = dg * (1.0 - g[k] * g[k]);
            dz[3 * hd + k] = d_o * o[k] * (1.0 - o[k]);
        }
        outer_acc(&mut grads.w_x, &dz, trace.inputs.row(t));
        outer_acc(&mut grads.w_h, &dz, trace.hiddens.row(t));
        for (gb, d) in grads.b.data_mut().iter_mut().zip(&dz) {
            *gb += d;
        }
        gemv_t_acc(&p.w_x, &dz, dx.row_mut(t));
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        gemv_t_acc(&p.w_h, &dz, &mut dh_next);
    }
    Ok(dx)
}

/// A stack of LSTM layers, each feeding its hidden states to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmStack {
    pub layers: Vec<LstmParams>,
}

impl LstmStack {
    pub fn new(input: usize, hidden: usize, depth: usize, stream: &RngStream) -> Self {
        LstmStack {
            layers: (0..depth)
                .map(|k| {
                    let inp = if k == 0 { input } else { hidden };
                    LstmParams::new(inp, hidden, &stream.child(format!("layer{k}")))
                })
                .collect(),
        }
    }

    pub fn forward(&self, sequence: &Matrix) -> Result<Vec<LstmTrace>> {
        let mut traces: Vec<LstmTrace> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = match traces.last() {
                Some(t) => t.hidden_states(),
                None => sequence.clone(),
            };
            traces.push(lstm_forward(layer, &input)?);
        }
        Ok(traces)
    }

    /// `d_top` is dL/dh of the last layer. Returns dL/d(sequence).
    pub fn backward(&self, traces: &[LstmTrace], d_top: &Matrix, grads: &mut LstmStack) -> Result<Matrix> {
        let mut d = d_top.clone();
        for k in (0..self.layers.len()).rev() {
            d = lstm_backward(&self.layers[k], &traces[k], &d, &mut grads.layers[k])?;
        }
        Ok(d)
    }
}

impl Parameterized for LstmStack {
    fn params(&self) -> Vec<(String, &Matrix)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(k, l)| prefixed(&format!("layer{k}"), l.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(k, l)| prefixed_mut(&format!("layer{k}"), l.params_mut()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Per-scalar LSTM step written without any of the vector kernels.
    fn oracle_step(p: &LstmParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = h.len();
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let pre = |row: usize| {
            let mut s = p.b.get(row, 0);
            for j in 0..x.len() {
                s += p.w_x.get(row, j) * x[j];
            }
            for j in 0..hd {
                s += p.w_h.get(row, j) * h[j];
            }
            s
        };
        let mut h_new = vec![0.0; hd];
        let mut c_new = vec![0.0; hd];
        for k in 0..hd {
            let i = sig(pre(k));
            let f = sig(pre(hd + k));
            let g = pre(2 * hd + k).tanh();
            let o = sig(pre(3 * hd + k));
            c_new[k] = f * c[k] + i * g;
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    fn random_params(rng: &mut ChaCha8Rng, c: usize, h: usize) -> LstmParams {
        let mut p = LstmParams::zeros(c, h);
        for (_, m) in p.params_mut() {
            for v in m.data_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
        }
        p
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_params_give_zero_state() {
        let p = LstmParams::zeros(3, 4);
        let (h, c) = lstm_step(&p, &[1.0, -2.0, 0.5], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
        let tr = lstm_forward(&p, &Matrix::filled(6, 3, 0.7)).unwrap();
        assert!(tr.hidden_states().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_preserves_cell() {
        let hd = 2;
        let mut p = LstmParams::zeros(1, hd);
        for k in 0..hd {
            p.b.set(k, 0, -20.0); // input gate closed
            p.b.set(hd + k, 0, 20.0); // forget gate open
            p.b.set(2 * hd + k, 0, 1.0);
        }
        let c_prev = [0.3, -1.2];
        let (_, c) = lstm_step(&p, &[5.0], &[0.1, 0.2], &c_prev).unwrap();
        for k in 0..hd {
            assert!((c[k] - c_prev[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn step_rejects_bad_state() {
        let p = LstmParams::zeros(2, 3);
        assert!(lstm_step(&p, &[0.0; 2], &[0.0; 2], &[0.0; 3]).is_err());
        assert!(lstm_step(&p, &[0.0; 2], &[0.0, f64::NAN, 0.0], &[0.0; 3]).is_err());
        assert!(lstm_forward(&p, &Matrix::zeros(0, 2)).is_err());
        assert!(lstm_forward(&p, &Matrix::zeros(3, 5)).is_err());
    }

    #[test]
    fn step_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let (c, h) = (rng.random_range(1..5), rng.random_range(1..6));
            let p = random_params(&mut rng, c, h);
            let x = random_vec(&mut rng, c);
            let hp = random_vec(&mut rng, h);
            let cp = random_vec(&mut rng, h);
            let (h1, c1) = lstm_step(&p, &x, &hp, &cp).unwrap();
            let (h2, c2) = oracle_step(&p, &x, &hp, &cp);
            for (a, b) in h1.iter().chain(&c1).zip(h2.iter().chain(&c2)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_chains_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(&mut rng, 3, 5);
        let seq = Matrix::from_vec(20, 3, random_vec(&mut rng, 60)).unwrap();
        let tr = lstm_forward(&p, &seq).unwrap();
        let (mut h, mut c) = (vec![0.0; 5], vec![0.0; 5]);
        for t in 0..20 {
            (h, c) = oracle_step(&p, seq.row(t), &h, &c);
            for (a, b) in tr.hidden(t).iter().zip(&h) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(tr.final_cell().len(), 5);
        // L = 1 equals a single step
        let one = lstm_forward(&p, &seq.slice_rows(0, 1)).unwrap();
        let (h1, _) = lstm_step(&p, seq.row(0), &[0.0; 5], &[0.0; 5]).unwrap();
        assert_eq!(one.final_hidden(), &h1[..]);
    }

    /// Loss = sum_t <w_t, h_t> for random weights w, so every hidden state
    /// receives upstream gradient.
    fn probe_loss(p: &LstmParams, seq: &Matrix, w: &Matrix) -> Result<f64> {
        let tr = lstm_forward(p, seq)?;
        Ok(tr
            .hidden_states()
            .data()
            .iter()
            .zip(w.data())
            .map(|(a, b)| a * b)
            .sum())
    }

    #[test]
    fn bptt_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let (c, h, l) = (rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=6));
            let p = random_params(&mut rng, c, h);
            let seq = Matrix::from_vec(l, c, random_vec(&mut rng, l * c)).unwrap();
            let w = Matrix::from_vec(l, h, random_vec(&mut rng, l * h)).unwrap();
            let tr = lstm_forward(&p, &seq).unwrap();
            let mut g = p.zeros_like();
            let dx = lstm_backward(&p, &tr, &w, &mut g).unwrap();
            let err = grad_check(
                |flat| {
                    let mut q = p.clone();
                    q.assign_flat(flat)?;
                    probe_loss(&q, &seq, &w)
                },
                &p.flatten(),
                &g.flatten(),
            )
            .unwrap();
            assert!(err < 1e-5, "seed {seed}: params {err}");
            let err = grad_check(
                |flat| probe_loss(&p, &Matrix::from_vec(l, c, flat.to_vec())?, &w),
                seq.data(),
                dx.data(),
            )
            .unwrap();
            assert!(err < 1e-5, "seed {seed}: inputs {err}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_params(&mut rng, 2, 3);
        let seq = Matrix::from_vec(4, 2, random_vec(&mut rng, 8)).unwrap();
        let tr = lstm_forward(&p, &seq).unwrap();
        let mut g = p.zeros_like();
        let dx = lstm_backward(&p, &tr, &Matrix::zeros(4, 3), &mut g).unwrap();
        assert!(g.flatten().iter().chain(dx.data()).all(|&v| v == 0.0));
        assert!(lstm_backward(&p, &tr, &Matrix::zeros(5, 3), &mut g).is_err());
    }

    #[test]
    fn input_gradient_is_causal() {
        // A loss on h_t only must give exactly zero gradient to inputs after t,
        // and perturbing those inputs must not change it.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_params(&mut rng, 2, 3);
        let seq = Matrix::from_vec(6, 2, random_vec(&mut rng, 12)).unwrap();
        let mut w = Matrix::zeros(6, 3);
        w.row_mut(2).copy_from_slice(&[0.5, -1.0, 2.0]);
        let tr = lstm_forward(&p, &seq).unwrap();
        let mut g = p.zeros_like();
        let dx = lstm_backward(&p, &tr, &w, &mut g).unwrap();
        for t in 3..6 {
            assert!(dx.row(t).iter().all(|&v| v == 0.0));
        }
        let base = probe_loss(&p, &seq, &w).unwrap();
        let mut later = seq.clone();
        for t in 3..6 {
            later.row_mut(t).iter_mut().for_each(|v| *v += 0.37);
        }
        assert_eq!(probe_loss(&p, &later, &w).unwrap(), base);
        // earlier inputs do affect it
        assert!(dx.row(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn stack_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let stack = LstmStack::new(2, 3, 3, &RngStream::new(5, "stack"));
        let seq = Matrix::from_vec(4, 2, random_vec(&mut rng, 8)).unwrap();
        let w = Matrix::from_vec(4, 3, random_vec(&mut rng, 12)).unwrap();
        let loss = |s: &LstmStack| -> Result<f64> {
            let tr = s.forward(&seq)?;
            let top = tr.last().unwrap().hidden_states();
            Ok(top.data().iter().zip(w.data()).map(|(a, b)| a * b).sum())
        };
        let tr = stack.forward(&seq).unwrap();
        let mut g = stack.zeros_like();
        stack.backward(&tr, &w, &mut g).unwrap();
        let err = grad_check(
            |flat| {
                let mut s = stack.clone();
                s.assign_flat(flat)?;
                loss(&s)
            },
            &stack.flatten(),
            &g.flatten(),
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
        assert_eq!(stack.params().len(), 9);
        assert_eq!(stack.params()[3].0, "layer1.w_x");
    }
}
