//! Valid 1D convolution, padded max pooling and the per-channel conv tower.

use crate::error::{invalid, shape_err, Result};
use crate::numerics::{dot, prefixed, prefixed_mut, xavier_uniform, Matrix, Parameterized, RngStream};

pub const POOL_KERNEL: usize = 2;
pub const POOL_STRIDE: usize = 2;
pub const POOL_PAD: usize = 1;

/// Multi-channel valid cross-correlation. `w` is `F x (C_in * k)` with the
/// taps of input channel `c` at columns `c*k .. (c+1)*k`; `b` is `F x 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub w: Matrix,
    pub b: Matrix,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new(in_channels: usize, filters: usize, kernel: usize, stream: &RngStream) -> Self {
        // Xavier over fan-in C_in*k and fan-out F*k.
        let mut w = xavier_uniform(filters, in_channels * kernel, &mut stream.rng());
        let adjust = ((filters + in_channels * kernel) as f64 / ((filters + in_channels) * kernel) as f64).sqrt();
        w.scale(adjust);
        Conv1d {
            w,
            b: Matrix::zeros(filters, 1),
            kernel,
        }
    }

    pub fn zeros(in_channels: usize, filters: usize, kernel: usize) -> Self {
        Conv1d {
            w: Matrix::zeros(filters, in_channels * kernel),
            b: Matrix::zeros(filters, 1),
            kernel,
        }
    }

    pub fn filters(&self) -> usize {
        self.w.rows()
    }

    pub fn in_channels(&self) -> usize {
        self.w.cols() / self.kernel
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        conv1d(x, &self.w, &self.b, self.kernel)
    }

    /// Accumulates into `grads`, returns dL/dx.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grads: &mut Conv1d) -> Result<Matrix> {
        conv1d_backward(x, &self.w, self.kernel, dy, &mut grads.w, &mut grads.b)
    }
}

impl Parameterized for Conv1d {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![("w".into(), &mut self.w), ("b".into(), &mut self.b)]
    }
}

fn check_conv(x: &Matrix, w: &Matrix, kernel: usize) -> Result<usize> {
    if kernel == 0 || w.cols() != x.rows() * kernel {
        return Err(shape_err!(
            "conv weights {:?} do not match {} input channels with kernel {kernel}",
            w.shape(),
            x.rows()
        ));
    }
    if x.cols() < kernel {
        return Err(shape_err!("conv input length {} is shorter than kernel {kernel}", x.cols()));
    }
    Ok(x.cols() - kernel + 1)
}

pub fn conv1d(x: &Matrix, w: &Matrix, b: &Matrix, kernel: usize) -> Result<Matrix> {
    let out_len = check_conv(x, w, kernel)?;
    b.ensure_shape(w.rows(), 1, "conv bias")?;
    // Unfold the input once: column t of `cols` holds every tap feeding output t.
    let cin = x.rows();
    let mut cols = Matrix::zeros(out_len, cin * kernel);
    for t in 0..out_len {
        let row = cols.row_mut(t);
        for c in 0..cin {
            row[c * kernel..(c + 1) * kernel].copy_from_slice(&x.row(c)[t..t + kernel]);
        }
    }
    let mut y = Matrix::zeros(w.rows(), out_len);
    for f in 0..w.rows() {
        let wf = w.row(f);
        let bias = b.data()[f];
        for (t, v) in y.row_mut(f).iter_mut().enumerate() {
            *v = bias + dot(wf, cols.row(t));
        }
    }
    Ok(y)
}

pub fn conv1d_backward(
    x: &Matrix,
    w: &Matrix,
    kernel: usize,
    dy: &Matrix,
    gw: &mut Matrix,
    gb: &mut Matrix,
) -> Result<Matrix> {
    let out_len = check_conv(x, w, kernel)?;
    dy.ensure_shape(w.rows(), out_len, "conv upstream gradient")?;
    let cin = x.rows();
    let mut dx = Matrix::zeros(cin, x.cols());
    for f in 0..w.rows() {
        let dyf = dy.row(f);
        gb.data_mut()[f] += dyf.iter().sum::<f64>();
        for c in 0..cin {
            let xc = x.row(c);
            for j in 0..kernel {
                let idx = f * w.cols() + c * kernel + j;
                gw.data_mut()[idx] += dot(dyf, &xc[j..j + out_len]);
                let wv = w.data()[idx];
                let dxc = &mut dx.row_mut(c)[j..j + out_len];
                for (d, g) in dxc.iter_mut().zip(dyf) {
                    *d += wv * g;
                }
            }
        }
    }
    Ok(dx)
}

pub fn pool_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || len + 2 * pad < kernel {
        return None;
    }
    Some((len + 2 * pad - kernel) / stride + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pooled {
    pub output: Matrix,
    /// Source column of each output entry (row-major like `output`).
    pub argmax: Vec<usize>,
}

/// Row-wise max pooling with `-inf` padding; ties go to the earliest index.
pub fn maxpool1d(x: &Matrix, kernel: usize, stride: usize, pad: usize) -> Result<Pooled> {
    if x.cols() == 0 || kernel == 0 {
        return Err(shape_err!("max pooling needs a nonempty input and kernel"));
    }
    let out_len = pool_len(x.cols(), kernel, stride, pad)
        .ok_or_else(|| shape_err!("pool kernel {kernel} does not fit length {}", x.cols()))?;
    let mut output = Matrix::zeros(x.rows(), out_len);
    let mut argmax = Vec::with_capacity(x.rows() * out_len);
    for r in 0..x.rows() {
        let row = x.row(r);
        for o in 0..out_len {
            let start = (o * stride).saturating_sub(pad);
            let end = (o * stride + kernel).saturating_sub(pad).min(row.len());
            if start >= end {
                return Err(shape_err!("pool window {o} covers only padding"));
            }
            let mut best = start;
            for i in start + 1..end {
                if row[i] > row[best] {
                    best = i;
                }
            }
            output.set(r, o, row[best]);
            argmax.push(best);
        }
    }
    Ok(Pooled { output, argmax })
}

pub fn maxpool1d_backward(pooled: &Pooled, dy: &Matrix, input_len: usize) -> Result<Matrix> {
    dy.ensure_shape(pooled.output.rows(), pooled.output.cols(), "pool upstream gradient")?;
    let mut dx = Matrix::zeros(dy.rows(), input_len);
    let out_len = dy.cols();
    for r in 0..dy.rows() {
        for o in 0..out_len {
            let src = pooled.argmax[r * out_len + o];
            let v = dx.get(r, src) + dy.get(r, o);
            dx.set(r, src, v);
        }
    }
    Ok(dx)
}

/// Stage lengths `[T, conv1, pool1, conv2, pool2]` of a tower on length `t`.
pub fn tower_lengths(t: usize, kernel: usize) -> Result<[usize; 5]> {
    let fail = |stage: &str, so_far: &[usize]| {
        invalid!(
            "series length {t} is too short for two conv+pool stages (kernel {kernel}): stage lengths {so_far:?} end at {stage}"
        )
    };
    let conv = |l: usize| l.checked_sub(kernel).map(|v| v + 1).filter(|&v| v > 0);
    let l1 = conv(t).ok_or_else(|| fail("conv1", &[t]))?;
    let l2 = pool_len(l1, POOL_KERNEL, POOL_STRIDE, POOL_PAD).ok_or_else(|| fail("pool1", &[t, l1]))?;
    let l3 = conv(l2).ok_or_else(|| fail("conv2", &[t, l1, l2]))?;
    let l4 = pool_len(l3, POOL_KERNEL, POOL_STRIDE, POOL_PAD).ok_or_else(|| fail("pool2", &[t, l1, l2, l3]))?;
    Ok([t, l1, l2, l3, l4])
}

/// conv → ReLU → pool → conv → ReLU → pool over a single input channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTower {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
}

pub struct TowerTrace {
    input: Matrix,
    z1: Matrix,
    p1: Pooled,
    z2: Matrix,
    p2: Pooled,
}

impl TowerTrace {
    /// `filters2 x L'` feature map.
    pub fn output(&self) -> &Matrix {
        &self.p2.output
    }
}

fn relu(z: &Matrix) -> Matrix {
    z.map(|v| v.max(0.0))
}

fn relu_backward(z: &Matrix, dy: &mut Matrix) {
    for (d, &v) in dy.data_mut().iter_mut().zip(z.data()) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
}

impl ConvTower {
    pub fn new(filters1: usize, filters2: usize, kernel: usize, stream: &RngStream) -> Self {
        ConvTower {
            conv1: Conv1d::new(1, filters1, kernel, &stream.child("conv1")),
            conv2: Conv1d::new(filters1, filters2, kernel, &stream.child("conv2")),
        }
    }

    pub fn zeros(filters1: usize, filters2: usize, kernel: usize) -> Self {
        ConvTower {
            conv1: Conv1d::zeros(1, filters1, kernel),
            conv2: Conv1d::zeros(filters1, filters2, kernel),
        }
    }

    /// `x` is a single channel (`1 x T`).
    pub fn forward(&self, x: &Matrix) -> Result<TowerTrace> {
        x.ensure_shape(1, x.cols(), "tower input")?;
        tower_lengths(x.cols(), self.conv1.kernel)?;
        let z1 = self.conv1.forward(x)?;
        let p1 = maxpool1d(&relu(&z1), POOL_KERNEL, POOL_STRIDE, POOL_PAD)?;
        let z2 = self.conv2.forward(&p1.output)?;
        let p2 = maxpool1d(&relu(&z2), POOL_KERNEL, POOL_STRIDE, POOL_PAD)?;
        Ok(TowerTrace {
            input: x.clone(),
            z1,
            p1,
            z2,
            p2,
        })
    }

    pub fn backward(&self, tr: &TowerTrace, d_out: &Matrix, grads: &mut ConvTower) -> Result<Matrix> {
        let mut d = maxpool1d_backward(&tr.p2, d_out, tr.z2.cols())?;
        relu_backward(&tr.z2, &mut d);
        let d = self.conv2.backward(&tr.p1.output, &d, &mut grads.conv2)?;
        let mut d = maxpool1d_backward(&tr.p1, &d, tr.z1.cols())?;
        relu_backward(&tr.z1, &mut d);
        self.conv1.backward(&tr.input, &d, &mut grads.conv1)
    }
}

impl Parameterized for ConvTower {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut v = prefixed("conv1", self.conv1.params());
        v.extend(prefixed("conv2", self.conv2.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut v = prefixed_mut("conv1", self.conv1.params_mut());
        v.extend(prefixed_mut("conv2", self.conv2.params_mut()));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn conv_oracle(x: &Matrix, w: &Matrix, b: &Matrix, k: usize) -> Vec<Vec<f64>> {
        let l = x.cols() - k + 1;
        let mut out = vec![vec![0.0; l]; w.rows()];
        for f in 0..w.rows() {
            for t in 0..l {
                let mut s = b.get(f, 0);
                for c in 0..x.rows() {
                    for j in 0..k {
                        s += w.get(f, c * k + j) * x.get(c, t + j);
                    }
                }
                out[f][t] = s;
            }
        }
        out
    }

    #[test]
    fn conv_examples() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let y = conv1d(&x, &Matrix::from_rows(&[vec![1.0, 0.0, -1.0]]).unwrap(), &Matrix::zeros(1, 1), 3).unwrap();
        assert_eq!(y.data(), &[-2.0]);
        let x = Matrix::from_rows(&[vec![4.0, -1.0, 7.0, 2.5, 3.0]]).unwrap();
        let y = conv1d(&x, &Matrix::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap(), &Matrix::zeros(1, 1), 3).unwrap();
        assert_eq!(y.data(), &[-1.0, 7.0, 2.5]);
        assert!(conv1d(&Matrix::zeros(1, 2), &Matrix::zeros(1, 3), &Matrix::zeros(1, 1), 3).is_err());
    }

    #[test]
    fn conv_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let (cin, f, k) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..4));
            let l = rng.random_range(k..k + 10);
            let (x, w, b) = (random(&mut rng, cin, l), random(&mut rng, f, cin * k), random(&mut rng, f, 1));
            let y = conv1d(&x, &w, &b, k).unwrap();
            for (fi, row) in conv_oracle(&x, &w, &b, k).iter().enumerate() {
                for (t, v) in row.iter().enumerate() {
                    assert!((y.get(fi, t) - v).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for seed in 0..20 {
            let (cin, f, k) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
            let l = rng.random_range(k..k + 6);
            let conv = Conv1d { w: random(&mut rng, f, cin * k), b: random(&mut rng, f, 1), kernel: k };
            let x = random(&mut rng, cin, l);
            let probe = random(&mut rng, f, l - k + 1);
            let loss = |c: &Conv1d, x: &Matrix| -> Result<f64> {
                Ok(dot(c.forward(x)?.data(), probe.data()))
            };
            let mut g = conv.zeros_like();
            let dx = conv.backward(&x, &probe, &mut g).unwrap();
            let err = grad_check(
                |p| {
                    let mut c = conv.clone();
                    c.assign_flat(p)?;
                    loss(&c, &x)
                },
                &conv.flatten(),
                &g.flatten(),
            )
            .unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
            let err = grad_check(|p| loss(&conv, &Matrix::from_vec(cin, l, p.to_vec())?), x.data(), dx.data()).unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn pool_examples() {
        let x = Matrix::from_rows(&[vec![5.0, 1.0, 2.0, 8.0]]).unwrap();
        let p = maxpool1d(&x, 2, 2, 1).unwrap();
        assert_eq!(p.output.data(), &[5.0, 2.0, 8.0]);
        assert_eq!(p.argmax, vec![0, 2, 3]);
        assert_eq!(pool_len(120, 2, 2, 1), Some(61));
        assert_eq!(pool_len(59, 2, 2, 1), Some(30));
        // Negative data is never beaten by the padding.
        let x = Matrix::from_rows(&[vec![-5.0, -1.0, -2.0]]).unwrap();
        assert_eq!(maxpool1d(&x, 2, 2, 1).unwrap().output.data(), &[-5.0, -1.0]);
    }

    #[test]
    fn pool_matches_brute_force_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..100 {
            let (r, l) = (rng.random_range(1..4), rng.random_range(1..20));
            let x = random(&mut rng, r, l);
            let p = maxpool1d(&x, 2, 2, 1).unwrap();
            assert_eq!(p.output.cols(), l / 2 + 1);
            for row in 0..r {
                let mut padded = vec![f64::NEG_INFINITY];
                padded.extend_from_slice(x.row(row));
                padded.push(f64::NEG_INFINITY);
                for o in 0..p.output.cols() {
                    let m = padded[2 * o].max(padded[2 * o + 1]);
                    assert_eq!(p.output.get(row, o), m);
                }
            }
        }
    }

    #[test]
    fn tower_shape_chain() {
        assert_eq!(tower_lengths(122, 3).unwrap(), [122, 120, 61, 59, 30]);
        assert_eq!(tower_lengths(132, 3).unwrap(), [132, 130, 66, 64, 33]);
        assert_eq!(tower_lengths(6, 3).unwrap(), [6, 4, 3, 1, 1]);
        let err = tower_lengths(5, 3).unwrap_err().to_string();
        assert!(err.contains("[5, 3, 2]"), "{err}");
        let tower = ConvTower::new(4, 3, 3, &RngStream::new(0, "t"));
        let x = Matrix::filled(1, 122, 0.5);
        assert_eq!(tower.forward(&x).unwrap().output().shape(), (3, 30));
    }

    #[test]
    fn tower_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for seed in 0..20 {
            let tower = ConvTower::new(3, 2, 3, &RngStream::new(seed, "tower"));
            let mut tower = tower;
            for (_, b) in tower.params_mut().into_iter().filter(|(n, _)| n.ends_with(".b")) {
                *b = random(&mut rng, b.rows(), 1);
            }
            let x = random(&mut rng, 1, 12);
            let tr = tower.forward(&x).unwrap();
            let probe = random(&mut rng, 2, tr.output().cols());
            let loss = |t: &ConvTower, x: &Matrix| -> Result<f64> { Ok(dot(t.forward(x)?.output().data(), probe.data())) };
            let mut g = tower.zeros_like();
            let dx = tower.backward(&tr, &probe, &mut g).unwrap();
            let err = grad_check(
                |p| {
                    let mut t = tower.clone();
                    t.assign_flat(p)?;
                    loss(&t, &x)
                },
                &tower.flatten(),
                &g.flatten(),
            )
            .unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
            let err = grad_check(|p| loss(&tower, &Matrix::from_vec(1, 12, p.to_vec())?), x.data(), dx.data()).unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }
}
