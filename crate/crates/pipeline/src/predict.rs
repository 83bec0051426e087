//! Cross-validated single- and multi-task prediction per feature set, plus
//! the stacked combination of all sets.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;

use pixmood_core::mtlearn::{cross_validate_stacked, fit_tuned, CvConfig, DesignMatrix, Mode, StackedReport, TaskBlock};
use pixmood_core::stats::{z_normalize, FeatureColumn, OutcomeTable, OUTCOME_COLUMNS};

use crate::config::{stage_seed, RunConfig};
use crate::correlate::{load_user_features, outcome_table};
use crate::error::{CoreContext, PipelineError, Result};
use crate::manifest::Dataset;
use crate::table::{self, fmt_opt, write_csv, write_json};

pub const REPORT_TASKS: [&str; 2] = ["depression", "anxiety"];
pub const MODES: [Mode; 2] = [Mode::Single, Mode::Multi];

#[derive(Debug, Clone, PartialEq)]
pub struct PredictOutput {
    pub set_names: Vec<String>,
    pub reports: Vec<(Mode, StackedReport)>,
}

/// Design matrix over `rows`, absent values replaced by the column mean.
/// Columns with no observed value are dropped; `None` if nothing is left.
pub fn impute_design(columns: &[FeatureColumn], rows: &[usize]) -> Option<DesignMatrix> {
    let mut names = Vec::new();
    let mut data = Vec::new();
    for c in columns {
        let observed: Vec<f64> = rows.iter().filter_map(|&i| c.values[i]).collect();
        if observed.is_empty() {
            log::warn!("feature `{}` has no values; dropped", c.name);
            continue;
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        names.push(c.name.clone());
        data.extend(rows.iter().map(|&i| c.values[i].unwrap_or(mean)));
    }
    if names.is_empty() {
        return None;
    }
    let matrix = DMatrix::from_column_slice(rows.len(), names.len(), &data);
    Some(DesignMatrix::new(names, matrix).expect("imputed design is finite"))
}

/// All four outcomes, each z-scaled over the given users.
pub fn z_targets(outcomes: &OutcomeTable, users: &[String]) -> Result<TaskBlock> {
    let by_user: BTreeMap<&str, _> = outcomes.rows().iter().map(|r| (r.user_id.as_str(), r)).collect();
    let mut data = Vec::with_capacity(users.len() * OUTCOME_COLUMNS.len());
    for name in OUTCOME_COLUMNS {
        let raw: Vec<f64> = users
            .iter()
            .map(|u| OutcomeTable::value(by_user[u.as_str()], name).expect("known outcome"))
            .collect();
        data.extend(z_normalize(&raw).context(|| format!("outcome `{name}`"))?);
    }
    let names = OUTCOME_COLUMNS.iter().map(|s| s.to_string()).collect();
    TaskBlock::new(names, DMatrix::from_column_slice(users.len(), OUTCOME_COLUMNS.len(), &data))
        .context(|| "targets".into())
}

fn model_file(set: &str, mode: Mode) -> String {
    format!("{set}_{}.json", mode.label().to_lowercase())
}

pub fn run_predict(cfg: &RunConfig, dataset: &Dataset, out_dir: &Path) -> Result<PredictOutput> {
    let features = load_user_features(out_dir)?;
    let outcomes = outcome_table(dataset)?;
    let known: BTreeMap<&str, ()> = outcomes.rows().iter().map(|r| (r.user_id.as_str(), ())).collect();
    let rows: Vec<usize> = (0..features.user_ids.len())
        .filter(|&i| known.contains_key(features.user_ids[i].as_str()))
        .collect();
    let users: Vec<String> = rows.iter().map(|&i| features.user_ids[i].clone()).collect();
    if users.len() < cfg.folds {
        return Err(PipelineError::Config(format!(
            "{} users with features and outcomes cannot fill {} folds",
            users.len(),
            cfg.folds
        )));
    }
    let y = z_targets(&outcomes, &users)?;

    let sets: Vec<(String, DesignMatrix)> = features
        .sets
        .iter()
        .filter_map(|(name, cols)| match impute_design(cols, &rows) {
            Some(x) => Some((name.clone(), x)),
            None => {
                log::warn!("feature set `{name}` has no usable columns; skipped");
                None
            }
        })
        .collect();
    if sets.is_empty() {
        return Err(PipelineError::Config("no feature set has usable columns".into()));
    }
    let cv = CvConfig {
        folds: cfg.folds,
        seed: stage_seed(cfg.seed, "predict"),
        report_tasks: REPORT_TASKS.iter().map(|s| s.to_string()).collect(),
        ..CvConfig::default()
    };

    let mut reports = Vec::new();
    for mode in MODES {
        let report = cross_validate_stacked(&sets, &y, &users, mode, &cv)
            .context(|| format!("{} cross-validation", mode.label()))?;
        for (name, x) in &sets {
            let models = fit_tuned(x, &y, &users, mode, &cv)
                .context(|| format!("{} final fit of `{name}`", mode.label()))?;
            write_json(&out_dir.join(table::MODELS_DIR).join(model_file(name, mode)), &models)?;
        }
        reports.push((mode, report));
    }

    let labelled = |report: &StackedReport| -> Vec<(String, pixmood_core::mtlearn::CvReport)> {
        let mut v: Vec<_> = report.sets.clone();
        v.push(("combination".into(), report.combination.clone()));
        v
    };
    let mut fold_rows = Vec::new();
    let mut summary_rows = Vec::new();
    for (mode, report) in &reports {
        for (set, r) in labelled(report) {
            for m in &r.folds {
                fold_rows.push(vec![
                    set.clone(),
                    mode.label().into(),
                    m.task.clone(),
                    m.fold.to_string(),
                    m.n_test.to_string(),
                    fmt_opt(m.r),
                    m.mse.to_string(),
                    m.alpha.to_string(),
                    m.l1_ratio.to_string(),
                    m.note.clone().unwrap_or_default(),
                ]);
            }
            for s in &r.summary {
                summary_rows.push(vec![
                    set.clone(),
                    mode.label().into(),
                    s.task.clone(),
                    fmt_opt(s.mean_r),
                    fmt_opt(s.mean_mse),
                    s.folds_used.to_string(),
                ]);
            }
        }
    }
    let header = |cols: &[&str]| cols.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    write_csv(
        &out_dir.join(table::PREDICTION_FOLDS),
        &header(&["feature_set", "mode", "task", "fold", "n_test", "r", "mse", "alpha", "l1_ratio", "note"]),
        fold_rows,
    )?;
    write_csv(
        &out_dir.join(table::PREDICTION_SUMMARY),
        &header(&["feature_set", "mode", "task", "mean_r", "mean_mse", "folds_used"]),
        summary_rows,
    )?;
    let assignment = &reports[0].1.combination.assignment;
    let mut fold_of: Vec<(String, usize)> = assignment
        .folds
        .iter()
        .enumerate()
        .flat_map(|(f, us)| us.iter().map(move |u| (u.clone(), f)))
        .collect();
    fold_of.sort();
    write_csv(
        &out_dir.join(table::FOLDS),
        &header(&["user_id", "fold"]),
        fold_of.into_iter().map(|(u, f)| vec![u, f.to_string()]),
    )?;

    Ok(PredictOutput {
        set_names: sets.into_iter().map(|(n, _)| n).collect(),
        reports,
    })
}
