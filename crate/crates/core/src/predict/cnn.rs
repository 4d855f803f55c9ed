//! Multi-channel time-series CNN with an optional self-attention block.

use super::attention::{MhaTrace, MultiHeadAttention};
use super::conv::{tower_lengths, ConvTower, TowerTrace};
use crate::error::{invalid, shape_err, Result};
use crate::numerics::{prefixed, prefixed_mut, Linear, Matrix, Parameterized, RngStream};

/// Layer sizes of a [`CnnModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CnnShape {
    pub channels: usize,
    pub series_len: usize,
    pub filters1: usize,
    pub filters2: usize,
    pub kernel: usize,
    pub fc_width: usize,
    /// `Some(heads)` inserts the attention block.
    pub heads: Option<usize>,
    pub shared_towers: bool,
}

impl CnnShape {
    /// Pooled length per tower and fc1 input size.
    pub fn feature_dims(&self) -> Result<(usize, usize)> {
        let l = tower_lengths(self.series_len, self.kernel)?[4];
        Ok((l, self.channels * l * self.filters2))
    }
}

/// One conv tower per input channel (or one shared tower), an optional
/// two-head self-attention over pooled time positions with a residual
/// connection, then `fc1 → ReLU → fc2`.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel {
    pub towers: Vec<ConvTower>,
    pub attention: Option<MultiHeadAttention>,
    pub fc1: Linear,
    pub fc2: Linear,
    pub shape: CnnShape,
}

pub struct CnnTrace {
    towers: Vec<TowerTrace>,
    attention: Vec<MhaTrace>,
    features: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    pub prediction: f64,
}

impl CnnModel {
    pub fn new(shape: CnnShape, stream: &RngStream) -> Result<Self> {
        if shape.channels == 0 || shape.filters1 == 0 || shape.filters2 == 0 || shape.fc_width == 0 {
            return Err(invalid!("CNN layer sizes must be positive: {shape:?}"));
        }
        let (_, fc_in) = shape.feature_dims()?;
        let n_towers = if shape.shared_towers { 1 } else { shape.channels };
        let towers = (0..n_towers)
            .map(|c| ConvTower::new(shape.filters1, shape.filters2, shape.kernel, &stream.child(format!("tower{c}"))))
            .collect();
        let attention = match shape.heads {
            Some(h) => Some(MultiHeadAttention::new(shape.filters2, h, &stream.child("attention"))?),
            None => None,
        };
        Ok(CnnModel {
            towers,
            attention,
            fc1: Linear::new(fc_in, shape.fc_width, &stream.child("fc1")),
            fc2: Linear::new(shape.fc_width, 1, &stream.child("fc2")),
            shape,
        })
    }

    fn tower(&self, c: usize) -> &ConvTower {
        &self.towers[if self.shape.shared_towers { 0 } else { c }]
    }

    /// `series` is `C x T`.
    pub fn forward(&self, series: &Matrix) -> Result<CnnTrace> {
        let s = &self.shape;
        if series.shape() != (s.channels, s.series_len) {
            return Err(shape_err!(
                "CNN built for {} channels x {} steps, got {:?}",
                s.channels,
                s.series_len,
                series.shape()
            ));
        }
        let (_, fc_in) = s.feature_dims()?;
        let mut towers = Vec::with_capacity(s.channels);
        let mut attention = Vec::new();
        let mut features = Vec::with_capacity(fc_in);
        for c in 0..s.channels {
            let x = Matrix::from_vec(1, s.series_len, series.row(c).to_vec())?;
            let tr = self.tower(c).forward(&x)?;
            // Tokens are pooled time positions, embeddings the filter activations.
            let mut tokens = tr.output().transpose();
            if let Some(mha) = &self.attention {
                let at = mha.forward(&tokens)?;
                tokens.add_assign(&at.output)?;
                attention.push(at);
            }
            features.extend_from_slice(tokens.data());
            towers.push(tr);
        }
        let z1 = self.fc1.forward(&features)?;
        let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let prediction = self.fc2.forward(&a1)?[0];
        Ok(CnnTrace {
            towers,
            attention,
            features,
            z1,
            a1,
            prediction,
        })
    }

    pub fn predict(&self, series: &Matrix) -> Result<f64> {
        Ok(self.forward(series)?.prediction)
    }

    /// Accumulates dL/dθ for upstream `d_pred = dL/dŷ`.
    pub fn backward(&self, tr: &CnnTrace, d_pred: f64, grads: &mut CnnModel) -> Result<()> {
        let mut d_a1 = self.fc2.backward(&tr.a1, &[d_pred], &mut grads.fc2);
        for (d, &z) in d_a1.iter_mut().zip(&tr.z1) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }
        let d_features = self.fc1.backward(&tr.features, &d_a1, &mut grads.fc1);
        let f2 = self.shape.filters2;
        let (l, _) = self.shape.feature_dims()?;
        let block = l * f2;
        for (c, ttr) in tr.towers.iter().enumerate() {
            let mut d_tokens = Matrix::from_vec(l, f2, d_features[c * block..(c + 1) * block].to_vec())?;
            if let (Some(mha), Some(g)) = (&self.attention, grads.attention.as_mut()) {
                let d_in = mha.backward(&tr.attention[c], &d_tokens, g)?;
                d_tokens.add_assign(&d_in)?;
            }
            let idx = if self.shape.shared_towers { 0 } else { c };
            self.towers[idx].backward(ttr, &d_tokens.transpose(), &mut grads.towers[idx])?;
        }
        Ok(())
    }
}

impl Parameterized for CnnModel {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut v = Vec::new();
        for (c, t) in self.towers.iter().enumerate() {
            v.extend(prefixed(&format!("tower{c}"), t.params()));
        }
        if let Some(a) = &self.attention {
            v.extend(prefixed("attention", a.params()));
        }
        v.extend(prefixed("fc1", self.fc1.params()));
        v.extend(prefixed("fc2", self.fc2.params()));
        v
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut v = Vec::new();
        for (c, t) in self.towers.iter_mut().enumerate() {
            v.extend(prefixed_mut(&format!("tower{c}"), t.params_mut()));
        }
        if let Some(a) = &mut self.attention {
            v.extend(prefixed_mut("attention", a.params_mut()));
        }
        v.extend(prefixed_mut("fc1", self.fc1.params_mut()));
        v.extend(prefixed_mut("fc2", self.fc2.params_mut()));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(heads: Option<usize>, shared: bool) -> CnnShape {
        CnnShape {
            channels: 2,
            series_len: 12,
            filters1: 3,
            filters2: 2,
            kernel: 3,
            fc_width: 4,
            heads,
            shared_towers: shared,
        }
    }

    fn random_series(rng: &mut ChaCha8Rng, c: usize, t: usize) -> Matrix {
        Matrix::from_vec(c, t, (0..c * t).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn full_size_shape_trace() {
        let shape = CnnShape {
            channels: 53,
            series_len: 122,
            filters1: 128,
            filters2: 64,
            kernel: 3,
            fc_width: 128,
            heads: Some(2),
            shared_towers: false,
        };
        assert_eq!(shape.feature_dims().unwrap(), (30, 53 * 64 * 30));
    }

    #[test]
    fn too_short_series_is_rejected_with_stage_lengths() {
        let mut s = tiny(None, false);
        s.series_len = 5;
        let err = CnnModel::new(s, &RngStream::root(0)).unwrap_err().to_string();
        assert!(err.contains("stage lengths"), "{err}");
    }

    #[test]
    fn attention_off_is_bypassed_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let with = CnnModel::new(tiny(Some(2), false), &RngStream::new(1, "cnn")).unwrap();
        let mut plain = with.clone();
        plain.attention = None;
        plain.shape.heads = None;
        let reference = CnnModel::new(tiny(None, false), &RngStream::new(1, "cnn")).unwrap();
        assert_eq!(plain, reference);
        let x = random_series(&mut rng, 2, 12);
        assert_eq!(plain.predict(&x).unwrap().to_bits(), reference.predict(&x).unwrap().to_bits());
        assert_ne!(with.predict(&x).unwrap(), plain.predict(&x).unwrap());
    }

    #[test]
    fn shared_towers_have_one_parameter_set() {
        let m = CnnModel::new(tiny(None, true), &RngStream::root(2)).unwrap();
        assert_eq!(m.towers.len(), 1);
        let x = Matrix::filled(2, 12, 0.5);
        let tr = m.forward(&x).unwrap();
        // identical channels through a shared tower give identical features
        let half = tr.features.len() / 2;
        assert_eq!(tr.features[..half], tr.features[half..]);
    }

    #[test]
    fn full_model_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for seed in 0..20u64 {
            let shape = tiny(if seed % 2 == 0 { Some(2) } else { None }, seed % 5 == 0);
            let mut m = CnnModel::new(shape, &RngStream::new(seed, "cnn")).unwrap();
            for (_, p) in m.params_mut().into_iter().filter(|(n, _)| n.ends_with(".b")) {
                for v in p.data_mut() {
                    *v = rng.random_range(-0.5..0.5);
                }
            }
            let x = random_series(&mut rng, 2, 12);
            let tr = m.forward(&x).unwrap();
            let mut g = m.zeros_like();
            m.backward(&tr, 1.0, &mut g).unwrap();
            let err = grad_check(
                |p| {
                    let mut c = m.clone();
                    c.assign_flat(p)?;
                    c.predict(&x)
                },
                &m.flatten(),
                &g.flatten(),
            )
            .unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }
}
