use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::report::{aggregate_csv, comparison_reports, folds_csv, render_comparison, render_sweep, sweep_reports};
use super::stages::{augment_dataset, run_augment_stage, run_validation, FoldAudit, ValidationArm};
use crate::dataset::{tsds_bytes, SplitPlan};
use crate::error::{Error, Result};
use crate::forecast::{loss_log_csv, LossRow};
use crate::predict::{DatasetArm, EvalReport};

/// What a run produced. Paths are relative to the output directory; nothing
/// here depends on wall-clock time, so identical runs give identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub completed_stages: Vec<String>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub checkpoints: Vec<String>,
    pub reports: Vec<String>,
    /// SHA-256 of every file written, keyed by relative path.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArtifactKind {
    Checkpoint,
    Report,
    Other,
}

/// Writes artifacts into one directory and keeps the manifest in step.
/// Stage timings go to `timings.json`, outside the manifest.
pub struct ArtifactWriter {
    dir: PathBuf,
    manifest: RunManifest,
    timings: BTreeMap<String, f64>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path, command: &str, config: serde_json::Value, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.into(),
                seed,
                config,
                inputs: BTreeMap::new(),
                completed_stages: Vec::new(),
                failed_stage: None,
                error: None,
                checkpoints: Vec::new(),
                reports: Vec::new(),
                artifacts: BTreeMap::new(),
            },
            timings: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records an input file by the path it was given as and its hash.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.manifest.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8], kind: ArtifactKind) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.manifest.artifacts.insert(name.to_string(), sha256_hex(bytes));
        match kind {
            ArtifactKind::Checkpoint => self.manifest.checkpoints.push(name.to_string()),
            ArtifactKind::Report => self.manifest.reports.push(name.to_string()),
            ArtifactKind::Other => {}
        }
        Ok(path)
    }

    /// Runs one stage, timing it. On failure the manifest is written with
    /// the failing stage before the error is returned.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self);
        self.timings.insert(name.to_string(), start.elapsed().as_secs_f64());
        match out {
            Ok(v) => {
                self.manifest.completed_stages.push(name.to_string());
                Ok(v)
            }
            Err(e) => {
                self.manifest.failed_stage = Some(name.to_string());
                self.manifest.error = Some(e.to_string());
                // The stage error is what matters; a failure to record it is secondary.
                let _ = self.write_manifest();
                Err(e)
            }
        }
    }

    fn write_manifest(&self) -> Result<()> {
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let path = self.dir.join("timings.json");
        let text = serde_json::to_string_pretty(&self.timings)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn finish(self) -> Result<RunManifest> {
        self.write_manifest()?;
        Ok(self.manifest)
    }
}

/// Writes fold-level and aggregate CSVs for `reports` under `prefix`.
pub fn write_report_csvs(w: &mut ArtifactWriter, prefix: &str, reports: &[EvalReport]) -> Result<()> {
    w.write(&format!("{prefix}_folds.csv"), folds_csv(reports).as_bytes(), ArtifactKind::Report)?;
    w.write(&format!("{prefix}_aggregate.csv"), aggregate_csv(reports).as_bytes(), ArtifactKind::Report)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct AugmentAudit<'a> {
    split: &'a SplitPlan,
    trained_subjects: BTreeMap<String, Vec<&'a str>>,
}

pub struct ExperimentOutput {
    pub manifest: RunManifest,
    pub augment_split: SplitPlan,
    pub loss_logs: Vec<(crate::forecast::ForecastMode, Vec<LossRow>)>,
    pub arms: Vec<ValidationArm>,
    pub folds: Vec<SplitPlan>,
    pub audit: Vec<FoldAudit>,
    pub reports: Vec<EvalReport>,
}

/// The whole protocol: forecaster training, dataset extension, paired
/// k-fold validation of every model on every arm, reports and manifest.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    config.validate()?;
    let config = config.resolved();
    let mut w = ArtifactWriter::create(out_dir, "run", serde_json::to_value(&config)?, config.seed)?;
    if let crate::pipeline::DataSource::File { path } = &config.data {
        w.input(path)?;
    }
    let records = w.stage("data", |_| config.data.load(config.seed))?;

    let stage = w.stage("augment", |w| {
        let out = run_augment_stage(&config, &records)?;
        let mut trained_subjects = BTreeMap::new();
        for t in &out.trained {
            let mode = t.checkpoint.model.mode();
            w.write(&format!("forecaster_{mode}.tsaf"), &t.checkpoint.to_container()?.to_bytes(), ArtifactKind::Checkpoint)?;
            w.write(&format!("loss_{mode}.csv"), loss_log_csv(&t.log).as_bytes(), ArtifactKind::Report)?;
            trained_subjects.insert(mode.to_string(), t.trained_subjects.iter().map(String::as_str).collect());
        }
        let audit = AugmentAudit {
            split: &out.split,
            trained_subjects,
        };
        w.write("augment_split.json", serde_json::to_string_pretty(&audit)?.as_bytes(), ArtifactKind::Other)?;
        Ok(out)
    })?;

    let a = &config.augment;
    let compare_arm = DatasetArm::augmented(a.compare_mode, a.compare_step);
    let sweep_arms: Vec<DatasetArm> = a.sweep_steps.iter().map(|&s| DatasetArm::augmented(a.sweep_mode, s)).collect();
    let arms = w.stage("extend", |w| {
        let mut arms = vec![ValidationArm {
            arm: DatasetArm::Baseline,
            records: records.clone(),
        }];
        for arm in std::iter::once(compare_arm).chain(sweep_arms.iter().copied()) {
            if arms.iter().any(|x| x.arm == arm) {
                continue;
            }
            let DatasetArm::Augmented { mode: Some(mode), step } = arm else {
                unreachable!("experiment arms always name their forecaster")
            };
            let ckpt = stage.checkpoint(mode).expect("validated: mode was trained");
            let extended = augment_dataset(&records, ckpt, step)?;
            w.write(&format!("augmented_{mode}_step{step}.tsds"), &tsds_bytes(&extended), ArtifactKind::Other)?;
            arms.push(ValidationArm { arm, records: extended });
        }
        Ok(arms)
    })?;

    let validation = w.stage("validation", |w| {
        let out = run_validation(&config.validation, &records, &arms, a.train_only)?;
        w.write("folds.json", serde_json::to_string_pretty(&out.folds)?.as_bytes(), ArtifactKind::Other)?;
        write_report_csvs(w, "report", &out.reports)?;
        let models = &config.validation.models;
        write_report_csvs(w, "table1", &comparison_reports(&out.reports, models, compare_arm))?;
        w.write("table1.txt", render_comparison(&out.reports, models, compare_arm).as_bytes(), ArtifactKind::Report)?;
        let sweep_model = config.validation.sweep_model;
        if !sweep_arms.is_empty() && models.contains(&sweep_model) {
            write_report_csvs(w, "table2", &sweep_reports(&out.reports, sweep_model, &sweep_arms))?;
            w.write("table2.txt", render_sweep(&out.reports, sweep_model, &sweep_arms).as_bytes(), ArtifactKind::Report)?;
        }
        Ok(out)
    })?;

    let manifest = w.finish()?;
    Ok(ExperimentOutput {
        manifest,
        augment_split: stage.split,
        loss_logs: stage.trained.into_iter().map(|t| (t.checkpoint.model.mode(), t.log)).collect(),
        arms,
        folds: validation.folds,
        audit: validation.audit,
        reports: validation.reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::ForecastMode;
    use crate::pipeline::DataSource;
    use crate::predict::{PredictorArch, PredictorKind};

    fn tiny_config() -> ExperimentConfig {
        let mut c = ExperimentConfig {
            seed: 11,
            data: DataSource::Synthetic { subjects: 6, channels: 2, length: 30 },
            ..ExperimentConfig::default()
        };
        c.forecast.training.hidden = 3;
        c.forecast.training.epochs = 2;
        c.augment.sweep_steps = vec![4, 6];
        c.validation.kfold = 3;
        c.validation.models = vec![PredictorKind::Cnn, PredictorKind::TimeAttentionLstm];
        c.validation.arch = PredictorArch {
            conv1_filters: 2,
            conv2_filters: 2,
            fc_width: 2,
            lstm_hidden: 2,
            lstm_layers: 1,
            d_att: 2,
            ..PredictorArch::default()
        };
        c.validation.training.epochs = 1;
        c
    }

    #[test]
    fn sha256_of_abc() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn experiment_writes_artifacts_deterministically() {
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let a = run_experiment(&tiny_config(), d1.path()).unwrap();
        let b = run_experiment(&tiny_config(), d2.path()).unwrap();
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.manifest.failed_stage, None);
        assert_eq!(a.manifest.checkpoints, vec!["forecaster_stateless.tsaf", "forecaster_recursive.tsaf"]);
        let mut names: Vec<String> = a.manifest.artifacts.keys().cloned().collect();
        names.push("manifest.json".into());
        for name in &names {
            let x = std::fs::read(d1.path().join(name)).unwrap();
            let y = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
            if let Some(h) = a.manifest.artifacts.get(name.as_str()) {
                assert_eq!(&sha256_hex(&x), h);
            }
        }
        // baseline + stateless@4 + recursive@4 + recursive@6, two models each
        assert_eq!(a.reports.len(), 8);
        let t1 = std::fs::read_to_string(d1.path().join("table1_aggregate.csv")).unwrap();
        assert_eq!(t1.lines().count(), 1 + 2 * 2);
        let t2 = std::fs::read_to_string(d1.path().join("table2_aggregate.csv")).unwrap();
        assert_eq!(t2.lines().count(), 1 + 1 + 2);
        assert!(d1.path().join("timings.json").exists());
        assert_eq!(a.loss_logs[0].0, ForecastMode::Stateless);
    }

    #[test]
    fn failure_is_recorded_in_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny_config();
        c.validation.kfold = 7;
        assert!(run_experiment(&c, dir.path()).is_err());
        let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m.failed_stage.as_deref(), Some("validation"));
        assert!(m.error.unwrap().contains("N < k"));
        assert_eq!(m.completed_stages, vec!["data", "augment", "extend"]);
    }
}
