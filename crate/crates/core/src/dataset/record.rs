use crate::error::{invalid, Error, Result};
use crate::numerics::Matrix;

/// One subject: `C x T` channel-by-time series with its age label.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesRecord {
    pub subject_id: String,
    pub age: f64,
    pub tr_seconds: f64,
    pub series: Matrix,
}

impl TimeSeriesRecord {
    pub fn new(
        subject_id: impl Into<String>,
        age: f64,
        tr_seconds: f64,
        series: Matrix,
    ) -> Result<Self> {
        let r = TimeSeriesRecord {
            subject_id: subject_id.into(),
            age,
            tr_seconds,
            series,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.series.rows() == 0 || self.series.cols() == 0 {
            return Err(invalid!(
                "subject {}: series must have at least one channel and one time point",
                self.subject_id
            ));
        }
        if !(self.age.is_finite() && self.age > 0.0) {
            return Err(invalid!("subject {}: age must be positive, got {}", self.subject_id, self.age));
        }
        if !(self.tr_seconds.is_finite() && self.tr_seconds > 0.0) {
            return Err(invalid!(
                "subject {}: tr must be positive, got {}",
                self.subject_id,
                self.tr_seconds
            ));
        }
        self.series
            .ensure_finite(&format!("series of subject {}", self.subject_id))
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.series.rows()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.series.cols()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.series.cols() == 0
    }

    /// `T x C` view (one row per time point).
    pub fn time_major(&self) -> Matrix {
        self.series.transpose()
    }
}

/// Per-channel mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

/// Statistics of every channel; a channel with zero variance is an error.
pub fn channel_stats(record: &TimeSeriesRecord) -> Result<Vec<ChannelStats>> {
    let t = record.len() as f64;
    (0..record.channels())
        .map(|c| {
            let row = record.series.row(c);
            let mean = row.iter().sum::<f64>() / t;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / t;
            let std = var.sqrt();
            if !(std > 1e-12 * mean.abs().max(1.0)) {
                return Err(invalid!(
                    "subject {}: channel {c} is constant and cannot be standardized",
                    record.subject_id
                ));
            }
            Ok(ChannelStats { mean, std })
        })
        .collect()
}

/// Per-channel standardization to mean 0, population std 1.
pub fn zscore(record: &TimeSeriesRecord) -> Result<TimeSeriesRecord> {
    let stats = channel_stats(record)?;
    let mut out = record.clone();
    for (c, s) in stats.iter().enumerate() {
        for x in out.series.row_mut(c) {
            *x = (*x - s.mean) / s.std;
        }
    }
    Ok(out)
}

/// Strided decimation: keeps samples `0, factor, 2*factor, ...`.
pub fn downsample(record: &TimeSeriesRecord, factor: usize) -> Result<TimeSeriesRecord> {
    if factor == 0 {
        return Err(invalid!("downsampling factor must be at least 1"));
    }
    let t = record.len();
    if t < factor {
        return Err(Error::SeriesTooShort {
            len: t,
            window: factor,
        });
    }
    let new_t = t.div_ceil(factor);
    let mut series = Matrix::zeros(record.channels(), new_t);
    for c in 0..record.channels() {
        let src = record.series.row(c);
        for (dst, &v) in series.row_mut(c).iter_mut().zip(src.iter().step_by(factor)) {
            *dst = v;
        }
    }
    Ok(TimeSeriesRecord {
        subject_id: record.subject_id.clone(),
        age: record.age,
        tr_seconds: record.tr_seconds * factor as f64,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(rows: Vec<Vec<f64>>) -> TimeSeriesRecord {
        TimeSeriesRecord::new("s", 60.0, 0.735, Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn constructor_validates() {
        assert!(TimeSeriesRecord::new("s", 0.0, 1.0, Matrix::zeros(1, 1)).is_err());
        assert!(TimeSeriesRecord::new("s", 50.0, 1.0, Matrix::zeros(0, 3)).is_err());
        assert!(TimeSeriesRecord::new("s", 50.0, -1.0, Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn zscore_of_one_two_three() {
        let z = zscore(&record(vec![vec![1.0, 2.0, 3.0]])).unwrap();
        let a = (1.5f64).sqrt();
        let expected = [-a, 0.0, a];
        for (x, e) in z.series.row(0).iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_rejects_constant_channel_by_index() {
        let err = zscore(&record(vec![vec![1.0, 2.0], vec![4.0, 4.0]])).unwrap_err();
        assert!(err.to_string().contains("channel 1"), "{err}");
    }

    #[test]
    fn downsample_examples() {
        let r = record(vec![(1..=8).map(f64::from).collect()]);
        let d = downsample(&r, 4).unwrap();
        assert_eq!(d.series.row(0), &[1.0, 5.0]);
        assert_eq!(d.tr_seconds, 0.735 * 4.0);
        assert_eq!(downsample(&r, 1).unwrap(), r);
        assert!(downsample(&r, 0).is_err());
        assert!(downsample(&r, 9).is_err());

        let long = TimeSeriesRecord::new("s", 60.0, 0.735, Matrix::filled(2, 488, 1.0)).unwrap();
        let d = downsample(&long, 4).unwrap();
        assert_eq!(d.len(), 122);
        assert!((d.tr_seconds - 2.94).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn zscore_moments_and_idempotence(
            data in prop::collection::vec(-100.0f64..100.0, 30),
        ) {
            let r = TimeSeriesRecord::new("p", 50.0, 1.0, Matrix::from_vec(3, 10, data).unwrap()).unwrap();
            prop_assume!(channel_stats(&r).is_ok());
            let z = zscore(&r).unwrap();
            for c in 0..3 {
                let row = z.series.row(c);
                let n = row.len() as f64;
                let mut mean = 0.0;
                for &x in row { mean += x; }
                mean /= n;
                let mut var = 0.0;
                for &x in row { var += (x - mean) * (x - mean); }
                var /= n;
                prop_assert!(mean.abs() < 1e-10);
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-10);
            }
            let zz = zscore(&z).unwrap();
            prop_assert!(zz.series.max_abs_diff(&z.series) < 1e-10);
        }

        #[test]
        fn downsample_length_is_ceiling(t in 1usize..300, factor in 1usize..20) {
            prop_assume!(t >= factor);
            let r = TimeSeriesRecord::new("p", 50.0, 1.0, Matrix::filled(1, t, 2.0)).unwrap();
            prop_assert_eq!(downsample(&r, factor).unwrap().len(), t.div_ceil(factor));
        }
    }
}
