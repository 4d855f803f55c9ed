use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cnn::{CnnModel, CnnShape};
use super::talstm::TimeAttentionLstm;
use crate::container::ModelTag;
use crate::dataset::TimeSeriesRecord;
use crate::error::{invalid, shape_err, Error, Result};
use crate::numerics::{Matrix, Parameterized, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PredictorKind {
    #[serde(rename = "cnn")]
    Cnn,
    #[serde(rename = "cnn-att")]
    CnnAttention,
    #[serde(rename = "talstm")]
    TimeAttentionLstm,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 3] = [PredictorKind::Cnn, PredictorKind::CnnAttention, PredictorKind::TimeAttentionLstm];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictorKind::Cnn => "cnn",
            PredictorKind::CnnAttention => "cnn-att",
            PredictorKind::TimeAttentionLstm => "talstm",
        }
    }

    /// Row label used in the rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            PredictorKind::Cnn => "Time Series CNN",
            PredictorKind::CnnAttention => "CNN + Attention",
            PredictorKind::TimeAttentionLstm => "Time-Attention LSTM",
        }
    }

    pub fn tag(self) -> ModelTag {
        match self {
            PredictorKind::Cnn => ModelTag::Cnn,
            PredictorKind::CnnAttention => ModelTag::CnnAttention,
            PredictorKind::TimeAttentionLstm => ModelTag::TimeAttentionLstm,
        }
    }

    pub fn from_tag(tag: ModelTag) -> Option<Self> {
        match tag {
            ModelTag::Cnn => Some(PredictorKind::Cnn),
            ModelTag::CnnAttention => Some(PredictorKind::CnnAttention),
            ModelTag::TimeAttentionLstm => Some(PredictorKind::TimeAttentionLstm),
            _ => None,
        }
    }

    /// Whether a trained model accepts series of any length.
    pub fn length_agnostic(self) -> bool {
        self == PredictorKind::TimeAttentionLstm
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| invalid!("unknown model {s:?} (expected cnn, cnn-att or talstm)"))
    }
}

/// Layer sizes for all three regressors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorArch {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub fc_width: usize,
    pub heads: usize,
    pub shared_towers: bool,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub d_att: usize,
    /// Keep the extra `1/‖e_j‖` prefactor on the time-attention contexts.
    pub eq1_literal: bool,
}

impl Default for PredictorArch {
    fn default() -> Self {
        PredictorArch {
            conv1_filters: 128,
            conv2_filters: 64,
            kernel: 3,
            fc_width: 128,
            heads: 2,
            shared_towers: false,
            lstm_hidden: 64,
            lstm_layers: 3,
            d_att: 64,
            eq1_literal: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PredictorNet {
    Cnn(CnnModel),
    Talstm(TimeAttentionLstm),
}

/// A regressor plus the affine map from its raw output to age.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    pub kind: PredictorKind,
    pub arch: PredictorArch,
    pub channels: usize,
    /// Series length the CNN kinds were built for.
    pub series_len: usize,
    pub target_shift: f64,
    pub target_scale: f64,
    pub net: PredictorNet,
}

/// Per-channel standardization of a `C x T` series; constant channels are
/// only centered.
pub fn standardize_input(series: &Matrix) -> Matrix {
    let mut out = series.clone();
    let t = series.cols() as f64;
    for c in 0..series.rows() {
        let row = out.row_mut(c);
        let mean = row.iter().sum::<f64>() / t;
        let std = (row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / t).sqrt();
        let scale = if std > 1e-12 { 1.0 / std } else { 1.0 };
        row.iter_mut().for_each(|x| *x = (*x - mean) * scale);
    }
    out
}

impl Predictor {
    pub fn new(kind: PredictorKind, arch: PredictorArch, channels: usize, series_len: usize, stream: &RngStream) -> Result<Self> {
        let net = match kind {
            PredictorKind::Cnn | PredictorKind::CnnAttention => PredictorNet::Cnn(CnnModel::new(
                CnnShape {
                    channels,
                    series_len,
                    filters1: arch.conv1_filters,
                    filters2: arch.conv2_filters,
                    kernel: arch.kernel,
                    fc_width: arch.fc_width,
                    heads: (kind == PredictorKind::CnnAttention).then_some(arch.heads),
                    shared_towers: arch.shared_towers,
                },
                stream,
            )?),
            PredictorKind::TimeAttentionLstm => PredictorNet::Talstm(TimeAttentionLstm::new(
                channels,
                arch.lstm_hidden,
                arch.lstm_layers,
                arch.d_att,
                arch.eq1_literal,
                stream,
            )?),
        };
        Ok(Predictor {
            kind,
            arch,
            channels,
            series_len,
            target_shift: 0.0,
            target_scale: 1.0,
            net,
        })
    }

    pub fn check_record(&self, record: &TimeSeriesRecord) -> Result<()> {
        if record.channels() != self.channels {
            return Err(shape_err!(
                "{} model expects {} channels, subject {} has {}",
                self.kind,
                self.channels,
                record.subject_id,
                record.channels()
            ));
        }
        if !self.kind.length_agnostic() && record.len() != self.series_len {
            return Err(shape_err!(
                "{} model was built for length {}, subject {} has {}",
                self.kind,
                self.series_len,
                record.subject_id,
                record.len()
            ));
        }
        Ok(())
    }

    /// Raw network output on an already standardized series.
    pub fn raw_output(&self, input: &Matrix) -> Result<f64> {
        match &self.net {
            PredictorNet::Cnn(m) => m.predict(input),
            PredictorNet::Talstm(m) => m.predict(input),
        }
    }

    /// Squared error in standardized target units, with gradients.
    pub fn loss_and_grad(&self, input: &Matrix, target: f64, grads: &mut Predictor) -> Result<f64> {
        let diff = match (&self.net, &mut grads.net) {
            (PredictorNet::Cnn(m), PredictorNet::Cnn(g)) => {
                let tr = m.forward(input)?;
                let diff = tr.prediction - target;
                m.backward(&tr, 2.0 * diff, g)?;
                diff
            }
            (PredictorNet::Talstm(m), PredictorNet::Talstm(g)) => {
                let tr = m.forward(input)?;
                let diff = tr.prediction - target;
                m.backward(&tr, 2.0 * diff, g)?;
                diff
            }
            _ => return Err(shape_err!("gradient buffer has a different architecture")),
        };
        Ok(diff * diff)
    }

    pub fn predict(&self, record: &TimeSeriesRecord) -> Result<f64> {
        self.check_record(record)?;
        let raw = self.raw_output(&standardize_input(&record.series))?;
        Ok(raw * self.target_scale + self.target_shift)
    }
}

impl Parameterized for Predictor {
    fn params(&self) -> Vec<(String, &Matrix)> {
        match &self.net {
            PredictorNet::Cnn(m) => m.params(),
            PredictorNet::Talstm(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        match &mut self.net {
            PredictorNet::Cnn(m) => m.params_mut(),
            PredictorNet::Talstm(m) => m.params_mut(),
        }
    }
}
