use serde::{Deserialize, Serialize};

use super::TimeSeriesRecord;
use crate::error::{invalid, Error, Result};
use crate::numerics::Matrix;

/// Sliding-window layout: each segment of `window` points splits into an
/// input block of `input_len` and a target block of `window - input_len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowGeometry {
    pub window: usize,
    pub input_len: usize,
    pub stride: usize,
}

impl Default for WindowGeometry {
    fn default() -> Self {
        WindowGeometry {
            window: 24,
            input_len: 20,
            stride: 1,
        }
    }
}

impl WindowGeometry {
    pub fn target_len(&self) -> usize {
        self.window - self.input_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.input_len >= self.window {
            return Err(invalid!(
                "input length {} must be in 1..{}",
                self.input_len,
                self.window
            ));
        }
        if self.stride == 0 {
            return Err(invalid!("window stride must be at least 1"));
        }
        Ok(())
    }

    /// Number of windows a series of length `t` yields.
    pub fn count(&self, t: usize) -> usize {
        if t < self.window {
            0
        } else {
            (t - self.window) / self.stride + 1
        }
    }
}

/// One forecasting example: `input` is `L_in x C`, `target` is `L_out x C`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub subject_id: String,
    pub origin: usize,
    pub input: Matrix,
    pub target: Matrix,
}

/// The last `L_in` points of a series, from which the appended block is
/// forecast.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentSeed {
    pub subject_id: String,
    pub tail_window: Matrix,
}

pub fn slide_windows(record: &TimeSeriesRecord, geometry: &WindowGeometry) -> Result<Vec<WindowSample>> {
    geometry.validate()?;
    let t = record.len();
    if t < geometry.window {
        return Err(Error::SeriesTooShort {
            len: t,
            window: geometry.window,
        });
    }
    let tm = record.time_major();
    let count = geometry.count(t);
    Ok((0..count)
        .map(|k| {
            let origin = k * geometry.stride;
            let split = origin + geometry.input_len;
            WindowSample {
                subject_id: record.subject_id.clone(),
                origin,
                input: tm.slice_rows(origin, split),
                target: tm.slice_rows(split, origin + geometry.window),
            }
        })
        .collect())
}

pub fn augment_seed(record: &TimeSeriesRecord, input_len: usize) -> Result<AugmentSeed> {
    let t = record.len();
    if input_len == 0 {
        return Err(invalid!("input length must be at least 1"));
    }
    if t < input_len {
        return Err(Error::SeriesTooShort {
            len: t,
            window: input_len,
        });
    }
    Ok(AugmentSeed {
        subject_id: record.subject_id.clone(),
        tail_window: record.time_major().slice_rows(t - input_len, t),
    })
}
