use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Predictor, PredictorArch, PredictorKind};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::numerics::{Parameterized, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictorMeta {
    kind: PredictorKind,
    arch: PredictorArch,
    channels: usize,
    series_len: usize,
    target_shift: f64,
    target_scale: f64,
}

pub fn predictor_to_container(model: &Predictor) -> Result<Container> {
    let meta = PredictorMeta {
        kind: model.kind,
        arch: model.arch,
        channels: model.channels,
        series_len: model.series_len,
        target_shift: model.target_shift,
        target_scale: model.target_scale,
    };
    Ok(Container {
        tag: model.kind.tag(),
        config_json: serde_json::to_string(&meta)?,
        tensors: model.named_tensors(),
    })
}

pub fn predictor_from_container(c: &Container, path: &Path) -> Result<Predictor> {
    let corrupt = |message: String| Error::Corrupt {
        path: path.to_path_buf(),
        message,
    };
    let kind = PredictorKind::from_tag(c.tag).ok_or_else(|| corrupt(format!("{:?} checkpoint is not a predictor", c.tag)))?;
    let meta: PredictorMeta = serde_json::from_str(&c.config_json).map_err(|e| corrupt(format!("config block: {e}")))?;
    if meta.kind != kind {
        return Err(corrupt(format!("mode byte says {kind} but config says {}", meta.kind)));
    }
    // Shapes come from the config; values are overwritten below.
    let mut model = Predictor::new(kind, meta.arch, meta.channels, meta.series_len, &RngStream::root(0))
        .map_err(|e| corrupt(e.to_string()))?;
    model.load_named(&c.tensors).map_err(|e| corrupt(e.to_string()))?;
    model.target_shift = meta.target_shift;
    model.target_scale = meta.target_scale;
    Ok(model)
}

pub fn save_predictor(model: &Predictor, path: &Path) -> Result<()> {
    predictor_to_container(model)?.save(path)
}

pub fn load_predictor(path: &Path) -> Result<Predictor> {
    predictor_from_container(&Container::load(path)?, path)
}
