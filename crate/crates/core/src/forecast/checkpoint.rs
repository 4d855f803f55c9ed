use std::path::Path;

use serde::{Deserialize, Serialize};

use super::models::{ForecastMode, Forecaster, RecursiveForecaster, StatelessForecaster};
use super::train::ForecastTrainConfig;
use crate::container::{Container, ModelTag};
use crate::dataset::WindowGeometry;
use crate::error::{Error, Result};
use crate::numerics::Parameterized;

/// Training provenance stored in the JSON block of a forecaster checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub mode: ForecastMode,
    pub channels: usize,
    pub hidden: usize,
    pub geometry: WindowGeometry,
    pub training: ForecastTrainConfig,
    pub epochs_run: usize,
    pub final_train_mse: f64,
    pub final_test_mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecasterCheckpoint {
    pub model: Forecaster,
    pub meta: CheckpointMeta,
}

impl ForecasterCheckpoint {
    pub fn to_container(&self) -> Result<Container> {
        let tag = match self.model.mode() {
            ForecastMode::Stateless => ModelTag::Stateless,
            ForecastMode::Recursive => ModelTag::Recursive,
        };
        Ok(Container {
            tag,
            config_json: serde_json::to_string(&self.meta)?,
            tensors: self.model.named_tensors(),
        })
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        let corrupt = |message: String| Error::Corrupt {
            path: path.to_path_buf(),
            message,
        };
        let mode = match c.tag {
            ModelTag::Stateless => ForecastMode::Stateless,
            ModelTag::Recursive => ForecastMode::Recursive,
            other => return Err(corrupt(format!("{other:?} checkpoint is not a forecaster"))),
        };
        let meta: CheckpointMeta =
            serde_json::from_str(&c.config_json).map_err(|e| corrupt(format!("config block: {e}")))?;
        if meta.mode != mode {
            return Err(corrupt(format!(
                "mode byte says {mode} but config says {}",
                meta.mode
            )));
        }
        let g = meta.geometry;
        let mut model = match mode {
            ForecastMode::Stateless => Forecaster::Stateless(StatelessForecaster::zeros(
                meta.channels,
                meta.hidden,
                g.input_len,
                g.target_len(),
            )),
            ForecastMode::Recursive => {
                Forecaster::Recursive(RecursiveForecaster::zeros(meta.channels, meta.hidden, g.input_len))
            }
        };
        model
            .load_named(&c.tensors)
            .map_err(|e| corrupt(e.to_string()))?;
        Ok(ForecasterCheckpoint { model, meta })
    }
}

pub fn save_checkpoint(ckpt: &ForecasterCheckpoint, path: &Path) -> Result<()> {
    ckpt.to_container()?.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<ForecasterCheckpoint> {
    ForecasterCheckpoint::from_container(&Container::load(path)?, path)
}

/// Loads a checkpoint and insists on `mode`.
pub fn load_checkpoint_as(path: &Path, mode: ForecastMode) -> Result<ForecasterCheckpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.mode() != mode {
        return Err(Error::Config(format!(
            "{} holds a {} forecaster, expected {mode}",
            path.display(),
            ckpt.model.mode()
        )));
    }
    Ok(ckpt)
}
