use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{gen_synthetic, load_dataset, TimeSeriesRecord, WindowGeometry};
use crate::error::{invalid, Error, Result};
use crate::forecast::{ForecastMode, ForecastTrainConfig};
use crate::numerics::RngStream;
use crate::predict::{PredictorArch, PredictorKind, PredictorTrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        subjects: usize,
        channels: usize,
        length: usize,
    },
    /// A `.csv` or TSDS file.
    File { path: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            subjects: 200,
            channels: 4,
            length: 122,
        }
    }
}

impl DataSource {
    /// Synthetic data draws from the `data` stream of the master seed.
    pub fn load(&self, seed: u64) -> Result<Vec<TimeSeriesRecord>> {
        match self {
            DataSource::Synthetic {
                subjects,
                channels,
                length,
            } => gen_synthetic(*subjects, *channels, *length, &RngStream::new(seed, "data")),
            DataSource::File { path } => load_dataset(path),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastStageConfig {
    pub modes: Vec<ForecastMode>,
    pub train_fraction: f64,
    pub training: ForecastTrainConfig,
}

impl Default for ForecastStageConfig {
    fn default() -> Self {
        ForecastStageConfig {
            modes: vec![ForecastMode::Stateless, ForecastMode::Recursive],
            train_fraction: 0.8,
            training: ForecastTrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Forecaster and step count of the before/after comparison table.
    pub compare_mode: ForecastMode,
    pub compare_step: usize,
    /// Forecaster and step counts of the step-size table.
    pub sweep_mode: ForecastMode,
    pub sweep_steps: Vec<usize>,
    /// Extend only training-fold subjects; test folds keep their original
    /// series. Only meaningful for length-agnostic predictors.
    pub train_only: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            compare_mode: ForecastMode::Stateless,
            compare_step: 4,
            sweep_mode: ForecastMode::Recursive,
            sweep_steps: vec![4, 6, 8, 10, 12, 14],
            train_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub models: Vec<PredictorKind>,
    pub kfold: usize,
    pub arch: PredictorArch,
    pub training: PredictorTrainConfig,
    /// Model reported in the step-size table.
    pub sweep_model: PredictorKind,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            models: PredictorKind::ALL.to_vec(),
            kfold: 10,
            arch: PredictorArch::default(),
            training: PredictorTrainConfig::default(),
            sweep_model: PredictorKind::TimeAttentionLstm,
        }
    }
}

/// Everything needed to rerun an experiment. Nested `seed` fields are
/// overwritten from the master seed by [`ExperimentConfig::resolved`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub geometry: WindowGeometry,
    pub forecast: ForecastStageConfig,
    pub augment: AugmentConfig,
    pub validation: ValidationConfig,
}

/// Sorted, deduplicated step list; returns the removed duplicates too.
pub fn normalize_steps(steps: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut sorted = steps.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<usize> = Vec::with_capacity(sorted.len());
    let mut dups = Vec::new();
    for s in sorted {
        if out.last() == Some(&s) {
            dups.push(s);
        } else {
            out.push(s);
        }
    }
    (out, dups)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Copies the master seed into the stage configs and normalizes lists.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.forecast.training.seed = c.seed;
        c.validation.training.seed = c.seed;
        c.augment.sweep_steps = normalize_steps(&c.augment.sweep_steps).0;
        let mut models = c.validation.models.clone();
        models.sort_unstable();
        models.dedup();
        c.validation.models = models;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let block = self.geometry.target_len();
        if self.forecast.modes.is_empty() {
            return Err(invalid!("at least one forecaster mode is required"));
        }
        for (what, mode, steps) in [
            ("compare", self.augment.compare_mode, vec![self.augment.compare_step]),
            ("sweep", self.augment.sweep_mode, self.augment.sweep_steps.clone()),
        ] {
            if !self.forecast.modes.contains(&mode) {
                return Err(invalid!("{what} arm uses the {mode} forecaster, which is not trained"));
            }
            for s in steps {
                if s == 0 {
                    return Err(invalid!("{what} steps must be at least 1"));
                }
                if mode == ForecastMode::Stateless && s % block != 0 {
                    return Err(invalid!(
                        "{what} step {s} is not a multiple of the stateless block length {block}"
                    ));
                }
            }
        }
        if self.validation.models.is_empty() {
            return Err(invalid!("at least one validation model is required"));
        }
        if self.augment.train_only {
            if let Some(k) = self.validation.models.iter().find(|k| !k.length_agnostic()) {
                return Err(invalid!(
                    "train-only augmentation mixes series lengths, which the fixed-length {k} model cannot take"
                ));
            }
        }
        Ok(())
    }
}
