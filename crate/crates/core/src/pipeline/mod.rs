//! The two-stage protocol: train forecasters on an 80:20 subject split,
//! extend every series by dynamic forecasting, then compare age regressors
//! on the original and extended data with paired k-fold cross-validation.

mod config;
mod report;
mod run;
mod stages;

pub use config::{normalize_steps, AugmentConfig, DataSource, ExperimentConfig, ForecastStageConfig, ValidationConfig};
pub use report::{
    aggregate_csv, comparison_reports, folds_csv, render_comparison, render_sweep, sweep_reports, AGGREGATE_HEADER,
    FOLDS_HEADER,
};
pub use run::{run_experiment, sha256_hex, write_report_csvs, ArtifactKind, ArtifactWriter, ExperimentOutput, RunManifest};
pub use stages::{
    augment_dataset, run_augment_stage, run_validation, step_sweep, AugmentStageOutput, FoldAudit, ValidationArm,
    ValidationOutput,
};
