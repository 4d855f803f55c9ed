use std::fmt;

use serde::{Deserialize, Serialize};

use super::model::PredictorKind;
use crate::forecast::ForecastMode;
use crate::error::{invalid, Result};

/// Which copy of the data a report was computed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "dataset", rename_all = "lowercase")]
pub enum DatasetArm {
    Baseline,
    /// `mode` is `None` when the extended data came from an external file.
    Augmented { mode: Option<ForecastMode>, step: usize },
}

impl DatasetArm {
    pub fn augmented(mode: ForecastMode, step: usize) -> Self {
        DatasetArm::Augmented { mode: Some(mode), step }
    }

    /// Value of the `dataset` column in report CSVs.
    pub fn label(self) -> &'static str {
        match self {
            DatasetArm::Baseline => "baseline",
            DatasetArm::Augmented { mode: None, .. } => "augmented",
            DatasetArm::Augmented { mode: Some(ForecastMode::Stateless), .. } => "augmented-stateless",
            DatasetArm::Augmented { mode: Some(ForecastMode::Recursive), .. } => "augmented-recursive",
        }
    }

    /// Forecast steps appended; 0 for the baseline.
    pub fn step(self) -> usize {
        match self {
            DatasetArm::Baseline => 0,
            DatasetArm::Augmented { step, .. } => step,
        }
    }
}

impl fmt::Display for DatasetArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetArm::Baseline => f.write_str("baseline"),
            DatasetArm::Augmented { step, .. } => write!(f, "{}@{step}", self.label()),
        }
    }
}

/// Cross-validated MAE of one model on one dataset arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: PredictorKind,
    pub arm: DatasetArm,
    pub fold_mae: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl EvalReport {
    pub fn from_folds(model: PredictorKind, arm: DatasetArm, fold_mae: Vec<f64>) -> Result<Self> {
        if fold_mae.is_empty() {
            return Err(invalid!("report for {model} on {arm} has no folds"));
        }
        let (mean, std) = mean_std(&fold_mae);
        Ok(EvalReport {
            model,
            arm,
            fold_mae,
            mean,
            std,
        })
    }

    /// `4.0303±0.1195`-style cell.
    pub fn cell(&self) -> String {
        format!("{:.4}±{:.4}", self.mean, self.std)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
