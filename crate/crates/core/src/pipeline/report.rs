//! CSV and text renderings of cross-validation results.

use crate::predict::{DatasetArm, EvalReport, PredictorKind};

pub const FOLDS_HEADER: &str = "model,dataset,step,fold,mae";
pub const AGGREGATE_HEADER: &str = "model,dataset,step,mean_mae,std_mae";

pub fn folds_csv<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> String {
    let mut out = format!("{FOLDS_HEADER}\n");
    for r in reports {
        for (f, mae) in r.fold_mae.iter().enumerate() {
            out.push_str(&format!("{},{},{},{f},{mae}\n", r.model, r.arm.label(), r.arm.step()));
        }
    }
    out
}

pub fn aggregate_csv<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model,
            r.arm.label(),
            r.arm.step(),
            r.mean,
            r.std
        ));
    }
    out
}

fn find(reports: &[EvalReport], model: PredictorKind, arm: DatasetArm) -> Option<&EvalReport> {
    reports.iter().find(|r| r.model == model && r.arm == arm)
}

/// Reports of the before/after table: every model on the baseline and on
/// `augmented`, baseline rows first.
pub fn comparison_reports(reports: &[EvalReport], models: &[PredictorKind], augmented: DatasetArm) -> Vec<EvalReport> {
    [DatasetArm::Baseline, augmented]
        .iter()
        .flat_map(|&arm| models.iter().filter_map(move |&m| find(reports, m, arm)).cloned())
        .collect()
}

/// Reports of the step-size table: `model` on the baseline, then each step.
pub fn sweep_reports(reports: &[EvalReport], model: PredictorKind, arms: &[DatasetArm]) -> Vec<EvalReport> {
    std::iter::once(DatasetArm::Baseline)
        .chain(arms.iter().copied())
        .filter_map(|arm| find(reports, model, arm))
        .cloned()
        .collect()
}

/// Tab-separated table: one column per model, rows `Pre-Aug.` / `After-Aug.`.
pub fn render_comparison(reports: &[EvalReport], models: &[PredictorKind], augmented: DatasetArm) -> String {
    let mut out = String::new();
    for m in models {
        out.push('\t');
        out.push_str(m.display_name());
    }
    out.push('\n');
    for (label, arm) in [("Pre-Aug.", DatasetArm::Baseline), ("After-Aug.", augmented)] {
        out.push_str(label);
        for &m in models {
            out.push('\t');
            out.push_str(&find(reports, m, arm).map_or("-".into(), EvalReport::cell));
        }
        out.push('\n');
    }
    out
}

/// Tab-separated table with a baseline row and one row per step.
pub fn render_sweep(reports: &[EvalReport], model: PredictorKind, arms: &[DatasetArm]) -> String {
    let cell = |arm| find(reports, model, arm).map_or("-".to_string(), EvalReport::cell);
    let mut out = format!("{}\tPre-Aug.\tAfter-Aug.\n", model.display_name());
    out.push_str(&format!("Baseline\t{}\t-\n", cell(DatasetArm::Baseline)));
    for &arm in arms {
        out.push_str(&format!("Step {}\t-\t{}\n", arm.step(), cell(arm)));
    }
    out
}
