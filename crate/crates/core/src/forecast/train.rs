use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::checkpoint::{CheckpointMeta, ForecasterCheckpoint};
use super::models::{ForecastMode, Forecaster};
use crate::dataset::{WindowGeometry, WindowSample};
use crate::error::{invalid, Error, Result};
use crate::numerics::{Adam, AdamConfig, Parameterized, RngStream};
use crate::training::run_epoch;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ForecastTrainConfig {
    fn default() -> Self {
        ForecastTrainConfig {
            hidden: 50,
            epochs: 500,
            batch_size: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// One row of the loss curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
}

#[derive(Clone, Debug)]
pub struct ForecastTraining {
    pub checkpoint: ForecasterCheckpoint,
    pub log: Vec<LossRow>,
    /// Every subject whose windows entered a training batch.
    pub trained_subjects: BTreeSet<String>,
}

/// Mean loss of `model` over `windows` (the rollout loss for recursive models).
pub fn evaluate_forecaster(model: &Forecaster, windows: &[WindowSample]) -> Result<f64> {
    if windows.is_empty() {
        return Err(invalid!("no windows to evaluate"));
    }
    let mut total = 0.0;
    for w in windows {
        total += model.loss(&w.input, &w.target)?;
    }
    Ok(total / windows.len() as f64)
}

/// Trains a forecaster on `train` windows, reporting train and test MSE per
/// epoch. Every window starts from a zero LSTM state.
pub fn train_forecaster(
    mode: ForecastMode,
    geometry: &WindowGeometry,
    train: &[WindowSample],
    test: &[WindowSample],
    config: &ForecastTrainConfig,
) -> Result<ForecastTraining> {
    geometry.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(invalid!(
            "forecaster training needs nonempty train and test splits ({} / {} windows)",
            train.len(),
            test.len()
        ));
    }
    if config.hidden == 0 || config.batch_size == 0 {
        return Err(invalid!("hidden size and batch size must be positive"));
    }
    let trained_subjects: BTreeSet<String> = train.iter().map(|w| w.subject_id.clone()).collect();
    if let Some(w) = test.iter().find(|w| trained_subjects.contains(&w.subject_id)) {
        return Err(invalid!(
            "subject {} has windows on both sides of the split",
            w.subject_id
        ));
    }
    let channels = train[0].input.cols();
    for w in train.iter().chain(test) {
        w.input.ensure_shape(geometry.input_len, channels, "window input")?;
        w.target.ensure_shape(geometry.target_len(), channels, "window target")?;
    }

    let root = RngStream::new(config.seed, format!("forecaster/{mode}"));
    let mut model = Forecaster::new(
        mode,
        channels,
        config.hidden,
        geometry.input_len,
        geometry.target_len(),
        &root.child("init"),
    );
    let mut optimizer = Adam::new(&model, config.adam);
    let shuffle = root.child("shuffle");
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let train_mse = run_epoch(
            &mut model,
            &mut optimizer,
            train,
            config.batch_size,
            epoch,
            &shuffle,
            |m: &Forecaster, w: &WindowSample, g: &mut Forecaster| m.loss_and_grad(&w.input, &w.target, g),
        )?;
        let test_mse = match evaluate_forecaster(&model, test) {
            Err(Error::NonFinite { .. }) => f64::NAN,
            other => other?,
        };
        if !test_mse.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: test_mse,
            });
        }
        log::debug!("{mode} epoch {epoch}: train {train_mse:.6} test {test_mse:.6}");
        log.push(LossRow {
            epoch,
            train_mse,
            test_mse,
        });
    }
    let (final_train_mse, final_test_mse) = match log.last() {
        Some(r) => (r.train_mse, r.test_mse),
        None => (
            evaluate_forecaster(&model, train)?,
            evaluate_forecaster(&model, test)?,
        ),
    };
    debug_assert!(model.flatten().iter().all(|v| v.is_finite()));
    Ok(ForecastTraining {
        checkpoint: ForecasterCheckpoint {
            meta: CheckpointMeta {
                mode,
                channels,
                hidden: config.hidden,
                geometry: *geometry,
                training: *config,
                epochs_run: log.len(),
                final_train_mse,
                final_test_mse,
            },
            model,
        },
        log,
        trained_subjects,
    })
}

/// `epoch,train_mse,test_mse` CSV text.
pub fn loss_log_csv(log: &[LossRow]) -> String {
    let mut out = String::from("epoch,train_mse,test_mse\n");
    for r in log {
        out.push_str(&format!("{},{},{}\n", r.epoch, r.train_mse, r.test_mse));
    }
    out
}
