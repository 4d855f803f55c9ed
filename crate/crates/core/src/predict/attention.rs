//! Scaled dot-product attention, the two-head self-attention block of the
//! CNN, and the time attention over LSTM hidden states.

use crate::error::{invalid, shape_err, Result};
use crate::numerics::{prefixed, prefixed_mut, softmax_backward, softmax_in_place, xavier_uniform, Linear, Matrix, Parameterized, RngStream};

/// Row-wise attention weights and outputs of `softmax(scale * Q Kᵀ) V`.
#[derive(Clone, Debug, PartialEq)]
pub struct Attended {
    pub weights: Matrix,
    pub output: Matrix,
}

pub fn sdpa_forward(q: &Matrix, k: &Matrix, v: &Matrix, scale: f64) -> Result<Attended> {
    if q.cols() != k.cols() || k.rows() != v.rows() || k.rows() == 0 {
        return Err(shape_err!(
            "attention shapes q {:?}, k {:?}, v {:?} are incompatible",
            q.shape(),
            k.shape(),
            v.shape()
        ));
    }
    let mut weights = q.matmul_t(k)?;
    for r in 0..weights.rows() {
        let row = weights.row_mut(r);
        row.iter_mut().for_each(|s| *s *= scale);
        softmax_in_place(row);
    }
    let output = weights.matmul(v)?;
    Ok(Attended { weights, output })
}

/// Returns `(dq, dk, dv)` for upstream gradient `d_out` on the output.
pub fn sdpa_backward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    scale: f64,
    att: &Attended,
    d_out: &Matrix,
) -> Result<(Matrix, Matrix, Matrix)> {
    d_out.ensure_shape(att.output.rows(), att.output.cols(), "attention upstream gradient")?;
    let dv = att.weights.t_matmul(d_out)?;
    let dw = d_out.matmul_t(v)?;
    let mut ds = Matrix::zeros(dw.rows(), dw.cols());
    for r in 0..dw.rows() {
        softmax_backward(att.weights.row(r), dw.row(r), ds.row_mut(r));
    }
    ds.scale(scale);
    let dq = ds.matmul(k)?;
    let dk = ds.t_matmul(q)?;
    Ok((dq, dk, dv))
}

fn columns(m: &Matrix, start: usize, end: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), end - start);
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&m.row(r)[start..end]);
    }
    out
}

fn put_columns(m: &mut Matrix, start: usize, src: &Matrix) {
    for r in 0..m.rows() {
        m.row_mut(r)[start..start + src.cols()].copy_from_slice(src.row(r));
    }
}

/// Multi-head self-attention without positional encoding. The residual
/// connection is left to the caller.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

pub struct MhaTrace {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    per_head: Vec<Attended>,
    concat: Matrix,
    pub output: Matrix,
}

impl MhaTrace {
    pub fn head_weights(&self, h: usize) -> &Matrix {
        &self.per_head[h].weights
    }
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, stream: &RngStream) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(invalid!("embedding size {dim} is not divisible by {heads} heads"));
        }
        Ok(MultiHeadAttention {
            wq: Linear::new(dim, dim, &stream.child("wq")),
            wk: Linear::new(dim, dim, &stream.child("wk")),
            wv: Linear::new(dim, dim, &stream.child("wv")),
            wo: Linear::new(dim, dim, &stream.child("wo")),
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.wq.input_dim()
    }

    fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    pub fn forward(&self, x: &Matrix) -> Result<MhaTrace> {
        x.ensure_shape(x.rows(), self.dim(), "attention tokens")?;
        let q = self.wq.forward_rows(x)?;
        let k = self.wk.forward_rows(x)?;
        let v = self.wv.forward_rows(x)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut concat = Matrix::zeros(x.rows(), self.dim());
        let mut per_head = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (s, e) = (h * dh, (h + 1) * dh);
            let att = sdpa_forward(&columns(&q, s, e), &columns(&k, s, e), &columns(&v, s, e), scale)?;
            put_columns(&mut concat, s, &att.output);
            per_head.push(att);
        }
        let output = self.wo.forward_rows(&concat)?;
        Ok(MhaTrace {
            x: x.clone(),
            q,
            k,
            v,
            per_head,
            concat,
            output,
        })
    }

    pub fn backward(&self, tr: &MhaTrace, d_out: &Matrix, grads: &mut MultiHeadAttention) -> Result<Matrix> {
        let d_concat = self.wo.backward_rows(&tr.concat, d_out, &mut grads.wo)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let (n, d) = tr.q.shape();
        let (mut dq, mut dk, mut dv) = (Matrix::zeros(n, d), Matrix::zeros(n, d), Matrix::zeros(n, d));
        for (h, att) in tr.per_head.iter().enumerate() {
            let (s, e) = (h * dh, (h + 1) * dh);
            let (gq, gk, gv) = sdpa_backward(
                &columns(&tr.q, s, e),
                &columns(&tr.k, s, e),
                &columns(&tr.v, s, e),
                scale,
                att,
                &columns(&d_concat, s, e),
            )?;
            put_columns(&mut dq, s, &gq);
            put_columns(&mut dk, s, &gk);
            put_columns(&mut dv, s, &gv);
        }
        let mut dx = self.wq.backward_rows(&tr.x, &dq, &mut grads.wq)?;
        dx.add_assign(&self.wk.backward_rows(&tr.x, &dk, &mut grads.wk)?)?;
        dx.add_assign(&self.wv.backward_rows(&tr.x, &dv, &mut grads.wv)?)?;
        Ok(dx)
    }
}

impl Parameterized for MultiHeadAttention {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut v = prefixed("wq", self.wq.params());
        v.extend(prefixed("wk", self.wk.params()));
        v.extend(prefixed("wv", self.wv.params()));
        v.extend(prefixed("wo", self.wo.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut v = prefixed_mut("wq", self.wq.params_mut());
        v.extend(prefixed_mut("wk", self.wk.params_mut()));
        v.extend(prefixed_mut("wv", self.wv.params_mut()));
        v.extend(prefixed_mut("wo", self.wo.params_mut()));
        v
    }
}

/// Attention over the time steps of a hidden-state sequence:
/// `c_t = Σ_j softmax_j(q_t · e_j / √d_att) v_j`, with `q_t = W_q h_t`,
/// `e_j = W_e h_j`, `v_j = W_v h_j`.
///
/// With `literal` set, contexts carry the extra `1/d_att` prefactor, reading
/// `‖e_j‖` as the key dimensionality.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeAttention {
    pub w_q: Matrix,
    pub w_e: Matrix,
    pub w_v: Matrix,
    pub literal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeAttentionOutput {
    /// `T x d_att`
    pub contexts: Matrix,
    /// `T x T`, rows sum to one.
    pub alpha: Matrix,
}

pub struct TimeAttentionTrace {
    h: Matrix,
    q: Matrix,
    e: Matrix,
    v: Matrix,
    att: Attended,
}

impl TimeAttention {
    pub fn new(hidden: usize, d_att: usize, literal: bool, stream: &RngStream) -> Self {
        TimeAttention {
            w_q: xavier_uniform(d_att, hidden, &mut stream.child("w_q").rng()),
            w_e: xavier_uniform(d_att, hidden, &mut stream.child("w_e").rng()),
            w_v: xavier_uniform(d_att, hidden, &mut stream.child("w_v").rng()),
            literal,
        }
    }

    pub fn d_att(&self) -> usize {
        self.w_q.rows()
    }

    fn score_scale(&self) -> f64 {
        1.0 / (self.d_att() as f64).sqrt()
    }

    fn context_scale(&self) -> f64 {
        if self.literal {
            1.0 / self.d_att() as f64
        } else {
            1.0
        }
    }

    pub fn forward(&self, h: &Matrix) -> Result<(TimeAttentionOutput, TimeAttentionTrace)> {
        if h.rows() == 0 {
            return Err(shape_err!("time attention needs at least one step"));
        }
        h.ensure_shape(h.rows(), self.w_q.cols(), "hidden states")?;
        let q = h.matmul_t(&self.w_q)?;
        let e = h.matmul_t(&self.w_e)?;
        let v = h.matmul_t(&self.w_v)?;
        let att = sdpa_forward(&q, &e, &v, self.score_scale())?;
        let mut contexts = att.output.clone();
        contexts.scale(self.context_scale());
        let out = TimeAttentionOutput {
            contexts,
            alpha: att.weights.clone(),
        };
        Ok((out, TimeAttentionTrace { h: h.clone(), q, e, v, att }))
    }

    pub fn backward(&self, tr: &TimeAttentionTrace, d_contexts: &Matrix, grads: &mut TimeAttention) -> Result<Matrix> {
        let mut d = d_contexts.clone();
        d.scale(self.context_scale());
        let (dq, de, dv) = sdpa_backward(&tr.q, &tr.e, &tr.v, self.score_scale(), &tr.att, &d)?;
        grads.w_q.add_assign(&dq.t_matmul(&tr.h)?)?;
        grads.w_e.add_assign(&de.t_matmul(&tr.h)?)?;
        grads.w_v.add_assign(&dv.t_matmul(&tr.h)?)?;
        let mut dh = dq.matmul(&self.w_q)?;
        dh.add_assign(&de.matmul(&self.w_e)?)?;
        dh.add_assign(&dv.matmul(&self.w_v)?)?;
        Ok(dh)
    }
}

/// Contexts and weights of [`TimeAttention`] for hidden states `h`.
pub fn time_attention(h: &Matrix, params: &TimeAttention) -> Result<TimeAttentionOutput> {
    Ok(params.forward(h)?.0)
}

impl Parameterized for TimeAttention {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![("w_q".into(), &self.w_q), ("w_e".into(), &self.w_e), ("w_v".into(), &self.w_v)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("w_q".into(), &mut self.w_q),
            ("w_e".into(), &mut self.w_e),
            ("w_v".into(), &mut self.w_v),
        ]
    }
}

/// Plain loop implementation of one attention head, used as a test oracle.
#[cfg(test)]
pub(crate) fn attention_oracle(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>], scale: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut weights = Vec::new();
    let mut outputs = Vec::new();
    for qt in q {
        let scores: Vec<f64> = k.iter().map(|kj| crate::numerics::dot(qt, kj) * scale).collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
        let z: f64 = ex.iter().sum();
        let a: Vec<f64> = ex.iter().map(|x| x / z).collect();
        let mut o = vec![0.0; v[0].len()];
        for (aj, vj) in a.iter().zip(v) {
            for (oi, vi) in o.iter_mut().zip(vj) {
                *oi += aj * vi;
            }
        }
        weights.push(a);
        outputs.push(o);
    }
    (weights, outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dot, grad_check};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rows(m: &Matrix) -> Vec<Vec<f64>> {
        (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
    }

    fn matvec(w: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
        (0..w.rows()).map(|i| b[i] + dot(w.row(i), x)).collect()
    }

    fn mha_oracle(m: &MultiHeadAttention, x: &Matrix) -> Vec<Vec<f64>> {
        let proj = |l: &Linear| -> Vec<Vec<f64>> { rows(x).iter().map(|t| matvec(&l.w, l.b.data(), t)).collect() };
        let (q, k, v) = (proj(&m.wq), proj(&m.wk), proj(&m.wv));
        let dh = m.dim() / m.heads;
        let mut concat = vec![Vec::new(); x.rows()];
        for h in 0..m.heads {
            let cut = |a: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { a.iter().map(|r| r[h * dh..(h + 1) * dh].to_vec()).collect() };
            let (_, o) = attention_oracle(&cut(&q), &cut(&k), &cut(&v), 1.0 / (dh as f64).sqrt());
            for (c, oi) in concat.iter_mut().zip(o) {
                c.extend(oi);
            }
        }
        concat.iter().map(|c| matvec(&m.wo.w, m.wo.b.data(), c)).collect()
    }

    fn randomized_mha(rng: &mut ChaCha8Rng, dim: usize, heads: usize) -> MultiHeadAttention {
        let mut m = MultiHeadAttention::new(dim, heads, &RngStream::new(rng.random(), "mha")).unwrap();
        for (_, p) in m.params_mut() {
            *p = random(rng, p.rows(), p.cols());
        }
        m
    }

    #[test]
    fn mha_rejects_indivisible_dim() {
        assert!(MultiHeadAttention::new(5, 2, &RngStream::root(0)).is_err());
    }

    #[test]
    fn mha_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..100 {
            let heads = rng.random_range(1..=3);
            let dim = heads * rng.random_range(1..=3);
            let m = randomized_mha(&mut rng, dim, heads);
            let n = rng.random_range(1..7);
            let x = random(&mut rng, n, dim);
            let y = m.forward(&x).unwrap();
            for (r, o) in mha_oracle(&m, &x).iter().enumerate() {
                for (a, b) in y.output.row(r).iter().zip(o) {
                    assert!((a - b).abs() <= 1e-10);
                }
            }
            for h in 0..heads {
                for r in 0..x.rows() {
                    assert!((y.head_weights(h).row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn mha_single_token_outputs_projected_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let m = randomized_mha(&mut rng, 4, 2);
        let x = random(&mut rng, 1, 4);
        let y = m.forward(&x).unwrap();
        let v = matvec(&m.wv.w, m.wv.b.data(), x.row(0));
        let expected = matvec(&m.wo.w, m.wo.b.data(), &v);
        for (a, b) in y.output.row(0).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(y.head_weights(0).data(), &[1.0]);
    }

    #[test]
    fn mha_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let m = randomized_mha(&mut rng, 4, 2);
            let x = random(&mut rng, 5, 4);
            let perm = [3, 0, 4, 1, 2];
            let mut px = Matrix::zeros(5, 4);
            for (i, &p) in perm.iter().enumerate() {
                px.row_mut(i).copy_from_slice(x.row(p));
            }
            let y = m.forward(&x).unwrap().output;
            let py = m.forward(&px).unwrap().output;
            for (i, &p) in perm.iter().enumerate() {
                for (a, b) in py.row(i).iter().zip(y.row(p)) {
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn mha_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for seed in 0..20 {
            let m = randomized_mha(&mut rng, 4, 2);
            let n = rng.random_range(1..5);
            let x = random(&mut rng, n, 4);
            let probe = random(&mut rng, n, 4);
            let loss = |m: &MultiHeadAttention, x: &Matrix| -> Result<f64> { Ok(dot(m.forward(x)?.output.data(), probe.data())) };
            let tr = m.forward(&x).unwrap();
            let mut g = m.zeros_like();
            let dx = m.backward(&tr, &probe, &mut g).unwrap();
            let err = grad_check(
                |p| {
                    let mut c = m.clone();
                    c.assign_flat(p)?;
                    loss(&c, &x)
                },
                &m.flatten(),
                &g.flatten(),
            )
            .unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
            let err = grad_check(|p| loss(&m, &Matrix::from_vec(n, 4, p.to_vec())?), x.data(), dx.data()).unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    fn randomized_time_attention(rng: &mut ChaCha8Rng, hidden: usize, d_att: usize, literal: bool) -> TimeAttention {
        TimeAttention {
            w_q: random(rng, d_att, hidden),
            w_e: random(rng, d_att, hidden),
            w_v: random(rng, d_att, hidden),
            literal,
        }
    }

    #[test]
    fn time_attention_singleton_and_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut ta = randomized_time_attention(&mut rng, 3, 4, false);
        let h = random(&mut rng, 1, 3);
        let out = time_attention(&h, &ta).unwrap();
        assert_eq!(out.alpha.data(), &[1.0]);
        let v: Vec<f64> = (0..4).map(|i| dot(ta.w_v.row(i), h.row(0))).collect();
        for (a, b) in out.contexts.row(0).iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }

        ta.w_q.fill(0.0);
        let h = random(&mut rng, 5, 3);
        let out = time_attention(&h, &ta).unwrap();
        assert!(out.alpha.data().iter().all(|&a| (a - 0.2).abs() < 1e-15));
        for j in 0..4 {
            let mean = (0..5).map(|t| dot(ta.w_v.row(j), h.row(t))).sum::<f64>() / 5.0;
            for t in 0..5 {
                assert!((out.contexts.get(t, j) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_attention_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for case in 0..100 {
            let literal = case % 2 == 1;
            let (t, hid, d) = (rng.random_range(1..8), rng.random_range(1..5), rng.random_range(1..5));
            let ta = randomized_time_attention(&mut rng, hid, d, literal);
            let h = random(&mut rng, t, hid);
            let out = time_attention(&h, &ta).unwrap();
            let proj = |w: &Matrix| -> Vec<Vec<f64>> {
                rows(&h).iter().map(|x| (0..d).map(|i| dot(w.row(i), x)).collect()).collect()
            };
            let (alpha, ctx) = attention_oracle(&proj(&ta.w_q), &proj(&ta.w_e), &proj(&ta.w_v), 1.0 / (d as f64).sqrt());
            let pref = if literal { 1.0 / d as f64 } else { 1.0 };
            for r in 0..t {
                assert!((out.alpha.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                for (a, b) in out.alpha.row(r).iter().zip(&alpha[r]) {
                    assert!((a - b).abs() <= 1e-12);
                }
                for (a, b) in out.contexts.row(r).iter().zip(&ctx[r]) {
                    assert!((a - pref * b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn time_attention_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        for seed in 0..20 {
            let literal = seed % 2 == 0;
            let ta = randomized_time_attention(&mut rng, 3, 4, literal);
            let t = rng.random_range(1..6);
            let h = random(&mut rng, t, 3);
            let probe = random(&mut rng, t, 4);
            let loss = |a: &TimeAttention, h: &Matrix| -> Result<f64> { Ok(dot(time_attention(h, a)?.contexts.data(), probe.data())) };
            let (_, tr) = ta.forward(&h).unwrap();
            let mut g = ta.zeros_like();
            let dh = ta.backward(&tr, &probe, &mut g).unwrap();
            let err = grad_check(
                |p| {
                    let mut a = ta.clone();
                    a.assign_flat(p)?;
                    loss(&a, &h)
                },
                &ta.flatten(),
                &g.flatten(),
            )
            .unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
            let err = grad_check(|p| loss(&ta, &Matrix::from_vec(t, 3, p.to_vec())?), h.data(), dh.data()).unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }
}
