//! Synthetic stand-in for ICN time courses.
//!
//! Each channel is an AR(2) damped oscillator
//! `x_t = 2 r cos(w) x_{t-1} - r^2 x_{t-2} + e_t` whose frequency `w` rises
//! and whose pole radius `r` falls with age, so age is recoverable from the
//! dynamics alone (z-scoring does not remove it). Innovations mix a drive
//! shared by all channels with per-channel noise. This is a benchmark
//! fixture, not a model of fMRI.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::TimeSeriesRecord;
use crate::error::{invalid, Result};
use crate::numerics::{Matrix, RngStream};

pub const AGE_MEAN: f64 = 59.17;
pub const AGE_STD: f64 = 4.87;
pub const AGE_RANGE: (f64, f64) = (40.0, 80.0);
/// Sampling interval after decimating 0.735 s by four.
pub const SYNTHETIC_TR: f64 = 2.94;

const BURN_IN: usize = 100;
const FREQ_PER_AGE_SD: f64 = 0.1;
const RADIUS_BASE: f64 = 0.92;
const RADIUS_PER_AGE_SD: f64 = 0.015;
const FREQ_JITTER: f64 = 0.01;
const SHARED_DRIVE: f64 = 0.5;

/// Oscillator frequency (radians per sample) of `channel` at standardized age `u`.
fn frequency(channel: usize, channels: usize, u: f64) -> f64 {
    let base = 0.3 + 0.4 * (channel as f64 + 0.5) / channels as f64;
    base + FREQ_PER_AGE_SD * u
}

fn radius(u: f64) -> f64 {
    (RADIUS_BASE - RADIUS_PER_AGE_SD * u).clamp(0.8, 0.97)
}

pub fn gen_synthetic(
    n_subjects: usize,
    channels: usize,
    length: usize,
    stream: &RngStream,
) -> Result<Vec<TimeSeriesRecord>> {
    if n_subjects == 0 || channels == 0 {
        return Err(invalid!("need at least one subject and one channel"));
    }
    if length < 25 {
        return Err(invalid!("series length {length} is below the minimum of 25"));
    }
    let width = n_subjects.to_string().len().max(4);
    let age_dist = Normal::new(AGE_MEAN, AGE_STD).expect("valid normal");
    let mut age_rng = stream.child("age").rng();
    let ages: Vec<f64> = (0..n_subjects)
        .map(|_| age_dist.sample(&mut age_rng).clamp(AGE_RANGE.0, AGE_RANGE.1))
        .collect();

    ages.iter()
        .enumerate()
        .map(|(i, &age)| {
            let id = format!("sub-{i:0width$}");
            let mut rng = stream.child(format!("subject/{i}")).rng();
            let u = (age - AGE_MEAN) / AGE_STD;
            let r = radius(u);
            let coeffs: Vec<(f64, f64)> = (0..channels)
                .map(|c| {
                    let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * FREQ_JITTER;
                    let w = (frequency(c, channels, u) + jitter).clamp(0.1, 1.2);
                    (2.0 * r * w.cos(), -r * r)
                })
                .collect();
            let own = (1.0 - SHARED_DRIVE * SHARED_DRIVE).sqrt();
            let mut state = vec![(0.0f64, 0.0f64); channels];
            let mut series = Matrix::zeros(channels, length);
            for t in 0..BURN_IN + length {
                let shared: f64 = rng.sample(StandardNormal);
                for (c, (a1, a2)) in coeffs.iter().enumerate() {
                    let e: f64 = rng.sample(StandardNormal);
                    let (x1, x2) = state[c];
                    let x = a1 * x1 + a2 * x2 + SHARED_DRIVE * shared + own * e;
                    state[c] = (x, x1);
                    if t >= BURN_IN {
                        series.set(c, t - BURN_IN, x);
                    }
                }
            }
            TimeSeriesRecord::new(id, age, SYNTHETIC_TR, series)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let s = RngStream::new(7, "data");
        let a = gen_synthetic(5, 3, 40, &s).unwrap();
        let b = gen_synthetic(5, 3, 40, &s).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(5, 3, 40, &RngStream::new(8, "data")).unwrap();
        assert_ne!(a, c);
        assert_eq!(a[0].subject_id, "sub-0000");
    }

    #[test]
    fn rejects_bad_dimensions() {
        let s = RngStream::root(0);
        assert!(gen_synthetic(0, 1, 30, &s).is_err());
        assert!(gen_synthetic(1, 0, 30, &s).is_err());
        assert!(gen_synthetic(1, 1, 24, &s).is_err());
    }

    #[test]
    fn age_distribution_matches_target_mean() {
        let recs = gen_synthetic(5000, 1, 25, &RngStream::new(1, "ages")).unwrap();
        let n = recs.len() as f64;
        let mean = recs.iter().map(|r| r.age).sum::<f64>() / n;
        let se = AGE_STD / n.sqrt();
        assert!((mean - AGE_MEAN).abs() < 3.0 * se, "mean {mean}");
        assert!(recs.iter().all(|r| (40.0..=80.0).contains(&r.age)));
    }

    #[test]
    fn channels_are_autocorrelated() {
        let recs = gen_synthetic(50, 4, 122, &RngStream::new(2, "ac")).unwrap();
        let mut total = 0.0;
        let mut count = 0.0;
        for r in &recs {
            for c in 0..r.channels() {
                let x = r.series.row(c);
                let m = x.iter().sum::<f64>() / x.len() as f64;
                let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
                let cov: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
                total += cov / var;
                count += 1.0;
            }
        }
        assert!(total / count > 0.5, "mean lag-1 autocorrelation {}", total / count);
    }
}
