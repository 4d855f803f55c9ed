use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use tsaug::container::{Container, ModelTag};
use tsaug::dataset::{gen_synthetic, load_dataset, tsds_bytes, write_csv, write_tsds, TimeSeriesRecord};
use tsaug::forecast::{load_checkpoint, loss_log_csv, save_checkpoint, ForecastMode};
use tsaug::numerics::RngStream;
use tsaug::pipeline::{
    augment_dataset, normalize_steps, render_comparison, render_sweep, run_augment_stage, run_experiment, run_validation,
    step_sweep, write_report_csvs, ArtifactKind, ArtifactWriter, DataSource, ExperimentConfig, ValidationArm,
};
use tsaug::predict::{load_predictor, DatasetArm};
use tsaug::{Error, Result};

use crate::ValidationFlags;

/// Shortest series any command accepts: one default window plus a point.
const MIN_LENGTH: usize = 25;

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write_dataset(path: &Path, records: &[TimeSeriesRecord]) -> Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        write_csv(path, records)
    } else {
        write_tsds(path, records)
    }
}

fn print_path(p: &Path) {
    println!("{}", p.display());
}

pub fn gen_data(subjects: usize, channels: usize, length: usize, seed: u64, out: &Path) -> Result<()> {
    if length < MIN_LENGTH {
        return Err(config_error(format!("--length {length} is below the minimum of {MIN_LENGTH}")));
    }
    if subjects == 0 || channels == 0 {
        return Err(config_error("--subjects and --channels must be at least 1"));
    }
    let records = gen_synthetic(subjects, channels, length, &RngStream::new(seed, "data"))?;
    write_dataset(out, &records)?;
    print_path(out);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn train_forecaster(
    mode: ForecastMode,
    data: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    epochs: Option<usize>,
    hidden: Option<usize>,
    out: &Path,
    loss_csv: Option<PathBuf>,
) -> Result<()> {
    let mut config = load_config(config)?;
    config.seed = seed.unwrap_or(config.seed);
    if let Some(e) = epochs {
        config.forecast.training.epochs = e;
    }
    if let Some(h) = hidden {
        config.forecast.training.hidden = h;
    }
    config.forecast.modes = vec![mode];
    config.data = DataSource::File { path: data.to_path_buf() };
    config.geometry.validate()?;
    let config = config.resolved();

    let records = load_dataset(data)?;
    let stage = run_augment_stage(&config, &records)?;
    let trained = &stage.trained[0];
    save_checkpoint(&trained.checkpoint, out)?;
    let loss_path = loss_csv.unwrap_or_else(|| out.with_extension("loss.csv"));
    std::fs::write(&loss_path, loss_log_csv(&trained.log)).map_err(|e| config_error(format!("{}: {e}", loss_path.display())))?;
    print_path(out);
    print_path(&loss_path);
    Ok(())
}

pub fn augment(data: &Path, ckpt: &Path, steps: usize, out: &Path) -> Result<()> {
    let records = load_dataset(data)?;
    let ckpt = load_checkpoint(ckpt)?;
    let extended = augment_dataset(&records, &ckpt, steps)?;
    write_dataset(out, &extended)?;
    print_path(out);
    Ok(())
}

/// Config file plus flag overrides, resolved and checked for the
/// validation-only commands.
fn validation_config(flags: &ValidationFlags, data: &Path) -> Result<ExperimentConfig> {
    let mut config = load_config(flags.config.as_deref())?;
    config.seed = flags.seed.unwrap_or(config.seed);
    if let Some(models) = &flags.models {
        config.validation.models = models.clone();
    }
    if let Some(k) = flags.kfold {
        config.validation.kfold = k;
    }
    if let Some(e) = flags.epochs {
        config.validation.training.epochs = e;
    }
    config.augment.train_only |= flags.augment_train_only;
    config.data = DataSource::File { path: data.to_path_buf() };
    let config = config.resolved();
    if config.validation.models.is_empty() {
        return Err(config_error("at least one model is required"));
    }
    if config.augment.train_only {
        if let Some(k) = config.validation.models.iter().find(|k| !k.length_agnostic()) {
            return Err(config_error(format!(
                "--augment-train-only mixes series lengths, which the fixed-length {k} model cannot take"
            )));
        }
    }
    Ok(config)
}

fn dataset_len(records: &[TimeSeriesRecord], path: &Path) -> Result<usize> {
    let lens: BTreeSet<usize> = records.iter().map(TimeSeriesRecord::len).collect();
    match lens.len() {
        1 => Ok(*lens.first().unwrap()),
        0 => Err(config_error(format!("{}: dataset is empty", path.display()))),
        _ => Err(config_error(format!("{}: subjects have different series lengths {lens:?}", path.display()))),
    }
}

pub fn evaluate(baseline: &Path, augmented: &[PathBuf], flags: &ValidationFlags, out: &Path) -> Result<()> {
    let config = validation_config(flags, baseline)?;
    let mut w = ArtifactWriter::create(out, "evaluate", serde_json::to_value(&config)?, config.seed)?;
    w.input(baseline)?;
    for p in augmented {
        w.input(p)?;
    }
    let base = load_dataset(baseline)?;
    let base_len = dataset_len(&base, baseline)?;
    let mut arms = vec![ValidationArm {
        arm: DatasetArm::Baseline,
        records: base.clone(),
    }];
    for p in augmented {
        let records = load_dataset(p)?;
        let len = dataset_len(&records, p)?;
        if len <= base_len {
            return Err(config_error(format!(
                "{}: series length {len} does not extend the baseline length {base_len}",
                p.display()
            )));
        }
        let arm = DatasetArm::Augmented { mode: None, step: len - base_len };
        if arms.iter().any(|a| a.arm == arm) {
            return Err(config_error(format!("two augmented datasets add {} steps", len - base_len)));
        }
        arms.push(ValidationArm { arm, records });
    }
    let validation = w.stage("validation", |w| {
        let v = run_validation(&config.validation, &base, &arms, config.augment.train_only)?;
        w.write("folds.json", serde_json::to_string_pretty(&v.folds)?.as_bytes(), ArtifactKind::Other)?;
        write_report_csvs(w, "report", &v.reports)?;
        if let [_, single] = arms.as_slice() {
            let table = render_comparison(&v.reports, &config.validation.models, single.arm);
            w.write("table1.txt", table.as_bytes(), ArtifactKind::Report)?;
        }
        Ok(v)
    })?;
    log::info!("{} reports", validation.reports.len());
    w.finish()?;
    for name in ["report_folds.csv", "report_aggregate.csv", "manifest.json"] {
        print_path(&out.join(name));
    }
    Ok(())
}

pub fn sweep(data: &Path, ckpt_path: &Path, steps: &[usize], flags: &ValidationFlags, out: &Path) -> Result<()> {
    let (steps, dups) = normalize_steps(steps);
    if !dups.is_empty() {
        log::warn!("ignoring duplicate steps {dups:?}");
    }
    if steps.is_empty() {
        return Err(config_error("--steps needs at least one value"));
    }
    let mut config = validation_config(flags, data)?;
    if flags.models.is_none() {
        config.validation.models = vec![config.validation.sweep_model];
    }
    let ckpt = load_checkpoint(ckpt_path)?;
    for &s in &steps {
        ckpt.model.check_steps(s).map_err(|e| config_error(format!("--steps {s}: {e}")))?;
    }
    config.augment.sweep_mode = ckpt.model.mode();
    config.augment.sweep_steps = steps.clone();

    let mut w = ArtifactWriter::create(out, "sweep", serde_json::to_value(&config)?, config.seed)?;
    w.input(data)?;
    w.input(ckpt_path)?;
    let records = load_dataset(data)?;
    w.stage("sweep", |w| {
        let v = step_sweep(&config.validation, &records, &ckpt, &steps, config.augment.train_only)?;
        w.write("folds.json", serde_json::to_string_pretty(&v.folds)?.as_bytes(), ArtifactKind::Other)?;
        write_report_csvs(w, "report", &v.reports)?;
        let arms: Vec<DatasetArm> = steps.iter().map(|&s| DatasetArm::augmented(ckpt.model.mode(), s)).collect();
        let mut text = String::new();
        for &m in &config.validation.models {
            text.push_str(&render_sweep(&v.reports, m, &arms));
        }
        w.write("table2.txt", text.as_bytes(), ArtifactKind::Report)?;
        Ok(())
    })?;
    w.finish()?;
    for name in ["report_folds.csv", "report_aggregate.csv", "table2.txt", "manifest.json"] {
        print_path(&out.join(name));
    }
    Ok(())
}

fn corrupt(path: &Path, message: String) -> Error {
    Error::Corrupt {
        path: path.to_path_buf(),
        message,
    }
}

fn check_prefix(original: &[TimeSeriesRecord], extended: &[TimeSeriesRecord], path: &Path) -> Result<usize> {
    if original.len() != extended.len() {
        return Err(corrupt(path, format!("{} subjects, original has {}", extended.len(), original.len())));
    }
    let mut added = BTreeSet::new();
    for (a, b) in original.iter().zip(extended) {
        if a.subject_id != b.subject_id || a.age.to_bits() != b.age.to_bits() || a.tr_seconds.to_bits() != b.tr_seconds.to_bits() {
            return Err(corrupt(path, format!("subject {} does not match the original's {}", b.subject_id, a.subject_id)));
        }
        if a.channels() != b.channels() || b.len() < a.len() {
            return Err(corrupt(path, format!("subject {} is not an extension of the original series", a.subject_id)));
        }
        for c in 0..a.channels() {
            let same = a.series.row(c).iter().zip(b.series.row(c)).all(|(x, y)| x.to_bits() == y.to_bits());
            if !same {
                return Err(corrupt(path, format!("subject {} channel {c}: prefix differs from the original", a.subject_id)));
            }
        }
        added.insert(b.len() - a.len());
    }
    Ok(added.into_iter().max().unwrap_or(0))
}

pub fn verify(files: &[PathBuf], original: Option<&Path>) -> Result<()> {
    let original = original.map(load_dataset).transpose()?;
    for path in files {
        let bytes = std::fs::read(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        match bytes.get(..4) {
            Some(b"TSAF") => {
                let c = Container::from_bytes(&bytes, path)?;
                match c.tag {
                    ModelTag::Stateless | ModelTag::Recursive => {
                        let ckpt = load_checkpoint(path)?;
                        println!("{}: ok, {} forecaster, {} channels", path.display(), ckpt.model.mode(), ckpt.model.channels());
                    }
                    _ => {
                        let p = load_predictor(path)?;
                        println!("{}: ok, {} predictor, {} channels", path.display(), p.kind, p.channels);
                    }
                }
            }
            _ => {
                let records = load_dataset(path)?;
                let lens: BTreeSet<usize> = records.iter().map(TimeSeriesRecord::len).collect();
                let mut line = format!("{}: ok, {} subjects, lengths {lens:?}", path.display(), records.len());
                if let Some(orig) = &original {
                    let added = check_prefix(orig, &records, path)?;
                    line.push_str(&format!(", prefix matches original (+{added} steps)"));
                }
                // Round-trip through the canonical encoding as a final check.
                if bytes.starts_with(b"TSDS") && tsds_bytes(&records) != bytes {
                    return Err(corrupt(path, "re-encoding does not reproduce the file".into()));
                }
                println!("{line}");
            }
        }
    }
    Ok(())
}

pub fn run(config: Option<&Path>, seed: Option<u64>, data: Option<PathBuf>, train_only: bool, out: &Path) -> Result<()> {
    let mut config = load_config(config)?;
    config.seed = seed.unwrap_or(config.seed);
    if let Some(path) = data {
        config.data = DataSource::File { path };
    }
    config.augment.train_only |= train_only;
    let (_, dups) = normalize_steps(&config.augment.sweep_steps);
    if !dups.is_empty() {
        log::warn!("ignoring duplicate sweep steps {dups:?}");
    }
    config.validate().map_err(|e| config_error(e.to_string()))?;
    let output = run_experiment(&config, out)?;
    for name in output.manifest.reports.iter().chain(output.manifest.checkpoints.iter()) {
        print_path(&out.join(name));
    }
    print_path(&out.join("manifest.json"));
    Ok(())
}
