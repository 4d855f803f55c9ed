use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ValidationConfig};
use crate::dataset::{augment_seed, channel_stats, kfold_split, slide_windows, subject_split, zscore, SplitPlan, TimeSeriesRecord, WindowSample};
use crate::error::{invalid, shape_err, Result};
use crate::forecast::{train_forecaster, ForecastMode, ForecasterCheckpoint, ForecastTraining};
use crate::numerics::{Matrix, RngStream};
use crate::predict::{evaluate_mae, train_predictor, DatasetArm, EvalReport, PredictorKind, PredictorTrainConfig};

pub struct AugmentStageOutput {
    pub split: SplitPlan,
    pub trained: Vec<ForecastTraining>,
}

impl AugmentStageOutput {
    pub fn checkpoint(&self, mode: ForecastMode) -> Option<&ForecasterCheckpoint> {
        self.trained.iter().map(|t| &t.checkpoint).find(|c| c.model.mode() == mode)
    }
}

fn windows_of(records: &[TimeSeriesRecord], keep: &BTreeSet<String>, config: &ExperimentConfig) -> Result<Vec<WindowSample>> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| keep.contains(&r.subject_id)) {
        out.extend(slide_windows(&zscore(r)?, &config.geometry)?);
    }
    Ok(out)
}

/// Splits subjects 80:20, cuts windows from the z-scored series and trains
/// every configured forecaster mode.
pub fn run_augment_stage(config: &ExperimentConfig, records: &[TimeSeriesRecord]) -> Result<AugmentStageOutput> {
    let split = subject_split(
        records,
        config.forecast.train_fraction,
        &RngStream::new(config.seed, "augment/split"),
    )?;
    let train = windows_of(records, &split.train, config)?;
    let test = windows_of(records, &split.test, config)?;
    let mut trained = Vec::with_capacity(config.forecast.modes.len());
    for &mode in &config.forecast.modes {
        log::info!("training {mode} forecaster on {} windows ({} held out)", train.len(), test.len());
        let out = train_forecaster(mode, &config.geometry, &train, &test, &config.forecast.training)?;
        debug_assert!(out.trained_subjects.is_subset(&split.train));
        trained.push(out);
    }
    Ok(AugmentStageOutput { split, trained })
}

/// Appends `steps` forecast points to every record. Forecasting runs on the
/// z-scored series; new points are mapped back with each channel's mean and
/// std, so the original samples are untouched.
pub fn augment_dataset(records: &[TimeSeriesRecord], checkpoint: &ForecasterCheckpoint, steps: usize) -> Result<Vec<TimeSeriesRecord>> {
    if steps == 0 {
        return Err(invalid!("augmentation needs at least one step"));
    }
    let model = &checkpoint.model;
    model.check_steps(steps)?;
    records
        .iter()
        .map(|r| {
            if r.channels() != model.channels() {
                return Err(shape_err!(
                    "forecaster expects {} channels, subject {} has {}",
                    model.channels(),
                    r.subject_id,
                    r.channels()
                ));
            }
            let stats = channel_stats(r)?;
            let seed = augment_seed(&zscore(r)?, model.input_len())?;
            let forecast = model.extend(&seed.tail_window, steps)?;
            let mut tail = Matrix::zeros(r.channels(), steps);
            for (c, s) in stats.iter().enumerate() {
                for t in 0..steps {
                    tail.set(c, t, forecast.get(t, c) * s.std + s.mean);
                }
            }
            let series = r.series.hstack(&tail)?;
            TimeSeriesRecord::new(r.subject_id.clone(), r.age, r.tr_seconds, series)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ValidationArm {
    pub arm: DatasetArm,
    pub records: Vec<TimeSeriesRecord>,
}

/// Subjects each fold's predictors were trained and tested on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub arm: DatasetArm,
    pub model: PredictorKind,
    pub fold: usize,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

#[derive(Clone, Debug)]
pub struct ValidationOutput {
    pub folds: Vec<SplitPlan>,
    pub reports: Vec<EvalReport>,
    pub audit: Vec<FoldAudit>,
}

fn subject_ids(records: &[TimeSeriesRecord]) -> BTreeSet<String> {
    records.iter().map(|r| r.subject_id.clone()).collect()
}

fn fold_training_config(base: &PredictorTrainConfig, fold: usize) -> PredictorTrainConfig {
    PredictorTrainConfig {
        seed: RngStream::new(base.seed, format!("validation/fold{fold}")).rng().next_u64(),
        ..*base
    }
}

/// k-fold cross-validation of every model on every arm with one shared fold
/// assignment. A predictor for fold `f` starts from the same initialization
/// on every arm. With `train_only`, test subjects are scored on their
/// baseline series.
pub fn run_validation(
    settings: &ValidationConfig,
    baseline: &[TimeSeriesRecord],
    arms: &[ValidationArm],
    train_only: bool,
) -> Result<ValidationOutput> {
    let ids = subject_ids(baseline);
    for a in arms {
        let arm_ids = subject_ids(&a.records);
        if arm_ids != ids || a.records.len() != baseline.len() {
            let missing: Vec<_> = ids.symmetric_difference(&arm_ids).take(3).collect();
            return Err(invalid!(
                "{} arm covers a different subject set than the baseline (e.g. {missing:?})",
                a.arm
            ));
        }
    }
    let folds = kfold_split(baseline, settings.kfold, &RngStream::new(settings.training.seed, "validation/folds"))?;
    let base_by_id: BTreeMap<&str, &TimeSeriesRecord> = baseline.iter().map(|r| (r.subject_id.as_str(), r)).collect();
    let mut reports = Vec::new();
    let mut audit = Vec::new();
    for a in arms {
        for &model in &settings.models {
            let mut fold_mae = Vec::with_capacity(folds.len());
            for (f, plan) in folds.iter().enumerate() {
                let train: Vec<TimeSeriesRecord> = a.records.iter().filter(|r| plan.is_train(&r.subject_id)).cloned().collect();
                let test: Vec<TimeSeriesRecord> = if train_only && a.arm != DatasetArm::Baseline {
                    plan.test.iter().map(|id| base_by_id[id.as_str()].clone()).collect()
                } else {
                    a.records.iter().filter(|r| plan.is_test(&r.subject_id)).cloned().collect()
                };
                let cfg = fold_training_config(&settings.training, f);
                let fitted = train_predictor(model, &settings.arch, &train, &cfg)?;
                let err = evaluate_mae(&fitted.model, &test)?;
                log::info!("{model} on {} fold {f}: MAE {err:.4}", a.arm);
                fold_mae.push(err);
                audit.push(FoldAudit {
                    arm: a.arm,
                    model,
                    fold: f,
                    train: subject_ids(&train),
                    test: subject_ids(&test),
                });
            }
            reports.push(EvalReport::from_folds(model, a.arm, fold_mae)?);
        }
    }
    Ok(ValidationOutput { folds, reports, audit })
}

/// Baseline plus one augmented arm per step, validated with shared folds.
pub fn step_sweep(
    settings: &ValidationConfig,
    baseline: &[TimeSeriesRecord],
    checkpoint: &ForecasterCheckpoint,
    steps: &[usize],
    train_only: bool,
) -> Result<ValidationOutput> {
    let mut arms = vec![ValidationArm {
        arm: DatasetArm::Baseline,
        records: baseline.to_vec(),
    }];
    for &step in steps {
        arms.push(ValidationArm {
            arm: DatasetArm::augmented(checkpoint.model.mode(), step),
            records: augment_dataset(baseline, checkpoint, step)?,
        });
    }
    run_validation(settings, baseline, &arms, train_only)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen_synthetic;
    use crate::forecast::{CheckpointMeta, ForecastTrainConfig, Forecaster};
    use crate::dataset::WindowGeometry;
    use crate::predict::PredictorArch;

    fn checkpoint(mode: ForecastMode, channels: usize) -> ForecasterCheckpoint {
        let g = WindowGeometry::default();
        ForecasterCheckpoint {
            model: Forecaster::new(mode, channels, 3, g.input_len, g.target_len(), &RngStream::root(1)),
            meta: CheckpointMeta {
                mode,
                channels,
                hidden: 3,
                geometry: g,
                training: ForecastTrainConfig::default(),
                epochs_run: 0,
                final_train_mse: 0.0,
                final_test_mse: 0.0,
            },
        }
    }

    fn tiny_validation(models: Vec<PredictorKind>) -> ValidationConfig {
        ValidationConfig {
            models,
            kfold: 3,
            arch: PredictorArch {
                conv1_filters: 2,
                conv2_filters: 2,
                fc_width: 2,
                lstm_hidden: 2,
                lstm_layers: 1,
                d_att: 2,
                ..PredictorArch::default()
            },
            training: PredictorTrainConfig { epochs: 1, batch_size: 4, ..PredictorTrainConfig::default() },
            ..ValidationConfig::default()
        }
    }

    #[test]
    fn augmentation_is_append_only() {
        let data = gen_synthetic(3, 2, 40, &RngStream::root(2)).unwrap();
        for (mode, steps) in [(ForecastMode::Recursive, 10), (ForecastMode::Stateless, 4), (ForecastMode::Stateless, 8)] {
            let ext = augment_dataset(&data, &checkpoint(mode, 2), steps).unwrap();
            for (a, b) in data.iter().zip(&ext) {
                assert_eq!(b.len(), a.len() + steps);
                assert_eq!((b.age, &b.subject_id), (a.age, &a.subject_id));
                for c in 0..2 {
                    let orig: Vec<u64> = a.series.row(c).iter().map(|v| v.to_bits()).collect();
                    let pre: Vec<u64> = b.series.row(c)[..a.len()].iter().map(|v| v.to_bits()).collect();
                    assert_eq!(orig, pre);
                }
            }
        }
    }

    #[test]
    fn augmentation_errors() {
        let data = gen_synthetic(1, 2, 40, &RngStream::root(2)).unwrap();
        assert!(augment_dataset(&data, &checkpoint(ForecastMode::Stateless, 2), 6).is_err());
        assert!(augment_dataset(&data, &checkpoint(ForecastMode::Recursive, 2), 0).is_err());
        assert!(augment_dataset(&data, &checkpoint(ForecastMode::Recursive, 3), 4).is_err());
        let short = TimeSeriesRecord::new("s", 60.0, 1.0, Matrix::from_vec(2, 10, (0..20).map(f64::from).collect()).unwrap()).unwrap();
        assert!(augment_dataset(&[short], &checkpoint(ForecastMode::Recursive, 2), 4).is_err());
    }

    #[test]
    fn validation_pairs_folds_and_never_leaks() {
        let data = gen_synthetic(7, 2, 30, &RngStream::root(3)).unwrap();
        let settings = tiny_validation(vec![PredictorKind::Cnn, PredictorKind::TimeAttentionLstm]);
        let out = step_sweep(&settings, &data, &checkpoint(ForecastMode::Recursive, 2), &[4, 6], false).unwrap();
        assert_eq!(out.reports.len(), 6);
        assert_eq!(out.audit.len(), 6 * 3);
        for a in &out.audit {
            assert!(a.train.is_disjoint(&a.test));
            assert_eq!(a.train, out.folds[a.fold].train);
            assert_eq!(a.test, out.folds[a.fold].test);
        }
        for r in &out.reports {
            let (m, s) = crate::predict::mean_std(&r.fold_mae);
            assert!((m - r.mean).abs() <= 1e-12 && (s - r.std).abs() <= 1e-12);
        }
    }

    #[test]
    fn validation_rejects_subject_mismatch() {
        let data = gen_synthetic(6, 2, 30, &RngStream::root(3)).unwrap();
        let arms = [ValidationArm { arm: DatasetArm::augmented(ForecastMode::Recursive, 4), records: data[1..].to_vec() }];
        let err = run_validation(&tiny_validation(vec![PredictorKind::Cnn]), &data, &arms, false).unwrap_err();
        assert!(err.to_string().contains("different subject set"), "{err}");
    }

    #[test]
    fn train_only_scores_test_subjects_on_original_series() {
        let data = gen_synthetic(6, 2, 30, &RngStream::root(4)).unwrap();
        let settings = tiny_validation(vec![PredictorKind::TimeAttentionLstm]);
        let a = step_sweep(&settings, &data, &checkpoint(ForecastMode::Recursive, 2), &[4], true).unwrap();
        let b = step_sweep(&settings, &data, &checkpoint(ForecastMode::Recursive, 2), &[4], false).unwrap();
        assert_eq!(a.reports[0], b.reports[0]);
        assert_ne!(a.reports[1].fold_mae, b.reports[1].fold_mae);
    }
}
