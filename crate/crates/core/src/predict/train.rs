use serde::{Deserialize, Serialize};

use super::model::{standardize_input, Predictor, PredictorArch, PredictorKind};
use crate::dataset::TimeSeriesRecord;
use crate::error::{invalid, shape_err, Result};
use crate::numerics::{mae, Adam, AdamConfig, Matrix, RngStream};
use crate::training::run_epoch;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for PredictorTrainConfig {
    fn default() -> Self {
        PredictorTrainConfig {
            epochs: 50,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PredictorTraining {
    pub model: Predictor,
    /// Mean training MSE per epoch, in squared years.
    pub train_loss: Vec<f64>,
}

struct Sample {
    input: Matrix,
    target: f64,
}

/// Fits `kind` to predict age from each record. Targets are standardized
/// with the training mean/std (stored in the model); inputs are
/// standardized per channel.
pub fn train_predictor(
    kind: PredictorKind,
    arch: &PredictorArch,
    records: &[TimeSeriesRecord],
    config: &PredictorTrainConfig,
) -> Result<PredictorTraining> {
    let first = records
        .first()
        .ok_or_else(|| invalid!("cannot train a {kind} model on an empty training set"))?;
    if config.batch_size == 0 {
        return Err(invalid!("batch size must be positive"));
    }
    for r in records {
        if r.channels() != first.channels() || (!kind.length_agnostic() && r.len() != first.len()) {
            return Err(shape_err!(
                "subject {} is {}x{}, expected {}x{}",
                r.subject_id,
                r.channels(),
                r.len(),
                first.channels(),
                first.len()
            ));
        }
    }
    let n = records.len() as f64;
    let shift = records.iter().map(|r| r.age).sum::<f64>() / n;
    let std = (records.iter().map(|r| (r.age - shift).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 1e-8 { std } else { 1.0 };

    let root = RngStream::new(config.seed, format!("predictor/{kind}"));
    let mut model = Predictor::new(kind, *arch, first.channels(), first.len(), &root.child("init"))?;
    model.target_shift = shift;
    model.target_scale = scale;
    let samples: Vec<Sample> = records
        .iter()
        .map(|r| Sample {
            input: standardize_input(&r.series),
            target: (r.age - shift) / scale,
        })
        .collect();

    let mut optimizer = Adam::new(&model, config.adam);
    let shuffle = root.child("shuffle");
    let mut train_loss = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let loss = run_epoch(
            &mut model,
            &mut optimizer,
            &samples,
            config.batch_size,
            epoch,
            &shuffle,
            |m: &Predictor, s: &Sample, g: &mut Predictor| m.loss_and_grad(&s.input, s.target, g),
        )?;
        log::debug!("{kind} epoch {epoch}: train mse {:.6}", loss * scale * scale);
        train_loss.push(loss * scale * scale);
    }
    Ok(PredictorTraining { model, train_loss })
}

pub fn predict_ages(model: &Predictor, records: &[TimeSeriesRecord]) -> Result<Vec<f64>> {
    records.iter().map(|r| model.predict(r)).collect()
}

/// Mean absolute error of the model's age predictions.
pub fn evaluate_mae(model: &Predictor, records: &[TimeSeriesRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(invalid!("cannot evaluate on an empty set"));
    }
    let ages: Vec<f64> = records.iter().map(|r| r.age).collect();
    mae(&predict_ages(model, records)?, &ages)
}
