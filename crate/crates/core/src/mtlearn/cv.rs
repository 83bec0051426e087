//! User-grouped k-fold cross-validation with nested hyperparameter search.
//!
//! Each outer fold picks `(alpha, l1_ratio)` by an inner grouped k-fold search
//! over the training users only, refits on all training users and scores the
//! held-out users. Targets are expected to be z-scaled already; they are never
//! rescaled per fold, so a mean predictor scores an MSE near 1.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_warm, predict, ConstantColumns, DesignMatrix, FitOptions, RegressionModel, TaskBlock};
use crate::error::{Error, Result};
use crate::stats::pearson_r;

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_INNER_FOLDS: usize = 3;
pub const DEFAULT_L1_RATIOS: [f64; 3] = [0.1, 0.5, 0.9];
pub const DEFAULT_STACK_RIDGE_ALPHA: f64 = 0.01;

/// 15 log-spaced penalties from 1e-4 to 10.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..15).map(|i| 10f64.powf(-4.0 + 5.0 * i as f64 / 14.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One elastic net per task.
    Single,
    /// All tasks jointly under the L2/1 penalty.
    Multi,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Single => "ST",
            Mode::Multi => "MT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub inner_folds: usize,
    pub alphas: Vec<f64>,
    pub l1_ratios: Vec<f64>,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Tasks that are scored, and that drive model selection in multi-task
    /// mode. Empty means every task.
    pub report_tasks: Vec<String>,
    /// Ridge penalty of the second-level model that combines feature sets.
    pub stack_ridge_alpha: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            inner_folds: DEFAULT_INNER_FOLDS,
            alphas: default_alpha_grid(),
            l1_ratios: DEFAULT_L1_RATIOS.to_vec(),
            seed: 0,
            tol: super::DEFAULT_TOL,
            max_iter: super::DEFAULT_MAX_ITER,
            report_tasks: Vec::new(),
            stack_ridge_alpha: DEFAULT_STACK_RIDGE_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    /// Users of each fold, sorted.
    pub folds: Vec<Vec<String>>,
}

impl FoldAssignment {
    pub fn fold_of(&self, user: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.binary_search_by(|u| u.as_str().cmp(user)).is_ok())
    }

    fn row_folds(&self, row_users: &[String]) -> Vec<usize> {
        let lookup: BTreeMap<&str, usize> = self
            .folds
            .iter()
            .enumerate()
            .flat_map(|(f, users)| users.iter().map(move |u| (u.as_str(), f)))
            .collect();
        row_users.iter().map(|u| lookup[u.as_str()]).collect()
    }

    /// Folds are pairwise disjoint and together cover exactly `users`.
    pub fn is_partition_of<'a>(&self, users: impl IntoIterator<Item = &'a str>) -> bool {
        let expected: BTreeSet<&str> = users.into_iter().collect();
        let mut seen = BTreeSet::new();
        for u in self.folds.iter().flatten() {
            if !seen.insert(u.as_str()) {
                return false;
            }
        }
        seen == expected
    }
}

/// Shuffles the distinct users under `seed` and deals them into `k` folds
/// whose sizes differ by at most one.
pub fn grouped_kfold(user_ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    let mut users: Vec<String> = user_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if users.len() < k {
        return Err(Error::Config(format!("{} users cannot fill {k} folds", users.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);
    let (base, extra) = (users.len() / k, users.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = users[start..start + size].to_vec();
        fold.sort();
        folds.push(fold);
        start += size;
    }
    Ok(FoldAssignment { k, seed, folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetric {
    pub fold: usize,
    pub task: String,
    pub n_test: usize,
    /// Absent when the held-out target is constant; such folds are skipped.
    pub r: Option<f64>,
    pub mse: f64,
    pub alpha: f64,
    pub l1_ratio: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task: String,
    pub mean_r: Option<f64>,
    pub mean_mse: Option<f64>,
    pub folds_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub mode: Mode,
    pub n_features: usize,
    pub folds: Vec<FoldMetric>,
    pub summary: Vec<TaskSummary>,
    pub assignment: FoldAssignment,
    pub warnings: Vec<String>,
}

impl CvReport {
    pub fn summary_for(&self, task: &str) -> Option<&TaskSummary> {
        self.summary.iter().find(|s| s.task == task)
    }

    pub fn mean_r(&self, task: &str) -> Option<f64> {
        self.summary_for(task).and_then(|s| s.mean_r)
    }

    pub fn mean_mse(&self, task: &str) -> Option<f64> {
        self.summary_for(task).and_then(|s| s.mean_mse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedReport {
    pub sets: Vec<(String, CvReport)>,
    pub combination: CvReport,
}

/// Tasks fitted together and the subset of them that is scored.
struct Unit {
    tasks: Vec<usize>,
    scored: Vec<usize>,
}

fn units_for(mode: Mode, y: &TaskBlock, reported: &[usize]) -> Result<Vec<Unit>> {
    match mode {
        Mode::Single => Ok(reported
            .iter()
            .map(|&t| Unit {
                tasks: vec![t],
                scored: vec![t],
            })
            .collect()),
        Mode::Multi => {
            if y.ntasks() < 2 {
                return Err(Error::Config("multi-task mode needs at least two tasks".into()));
            }
            Ok(vec![Unit {
                tasks: (0..y.ntasks()).collect(),
                scored: reported.to_vec(),
            }])
        }
    }
}

/// Per scored task: held-out predictions and out-of-fold training predictions.
struct UnitFold {
    test: Vec<(usize, Vec<f64>)>,
    oof: Vec<(usize, Vec<f64>)>,
    alpha: f64,
    l1_ratio: f64,
    warnings: Vec<String>,
    model: Option<RegressionModel>,
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 step
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rows_by_fold(folds: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); k];
    for (row, &f) in folds.iter().enumerate() {
        out[f].push(row);
    }
    out
}

fn fit_options(cfg: &CvConfig, alpha: f64, l1_ratio: f64) -> FitOptions {
    FitOptions {
        alpha,
        l1_ratio,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        standardize: true,
        fit_intercept: true,
        constant_columns: ConstantColumns::Ignore,
    }
}

/// Nested search and refit for one unit on one outer training split.
fn fit_unit(
    x: &DesignMatrix,
    y: &TaskBlock,
    train_users: &[String],
    x_test: &DesignMatrix,
    unit: &Unit,
    cfg: &CvConfig,
    seed: u64,
) -> Result<UnitFold> {
    let y_unit = TaskBlock {
        names: unit.tasks.iter().map(|&t| y.names[t].clone()).collect(),
        targets: y.targets.select_columns(&unit.tasks),
    };
    let scored_local: Vec<usize> = unit
        .scored
        .iter()
        .map(|s| unit.tasks.iter().position(|t| t == s).expect("scored task is in unit"))
        .collect();
    let n = x.nrows();
    let inner = grouped_kfold(train_users, cfg.inner_folds, seed)?;
    let inner_rows = rows_by_fold(&inner.row_folds(train_users), cfg.inner_folds);

    let mut alphas = cfg.alphas.clone();
    alphas.sort_by(|a, b| b.total_cmp(a));
    let paths: Vec<(usize, usize)> = (0..cfg.l1_ratios.len())
        .flat_map(|r| (0..cfg.inner_folds).map(move |f| (r, f)))
        .collect();

    // For every (l1_ratio, inner fold): validation predictions along the alpha path.
    let path_preds: Vec<Vec<Option<DMatrix<f64>>>> = paths
        .par_iter()
        .map(|&(ri, f)| {
            let val = &inner_rows[f];
            let train: Vec<usize> = (0..n).filter(|i| !val.contains(i)).collect();
            let (xt, yt) = (x.select_rows(&train), y_unit.select_rows(&train));
            let xv = x.select_rows(val);
            let mut warm: Option<RegressionModel> = None;
            alphas
                .iter()
                .map(|&alpha| {
                    let opts = fit_options(cfg, alpha, cfg.l1_ratios[ri]);
                    match fit_warm(&xt, &yt, &opts, warm.as_ref()) {
                        Ok(model) => {
                            let pred = predict(&model, &xv).ok();
                            warm = Some(model);
                            pred
                        }
                        Err(_) => None,
                    }
                })
                .collect()
        })
        .collect();

    let mut warnings = Vec::new();
    let mut best: Option<(f64, usize, usize)> = None;
    for ri in 0..cfg.l1_ratios.len() {
        for ai in 0..alphas.len() {
            let mut sse = 0.0;
            let mut count = 0usize;
            let mut failed = false;
            for f in 0..cfg.inner_folds {
                let idx = ri * cfg.inner_folds + f;
                let Some(pred) = &path_preds[idx][ai] else {
                    failed = true;
                    break;
                };
                for (local, &row) in inner_rows[f].iter().enumerate() {
                    for &t in &scored_local {
                        sse += (pred[(local, t)] - y_unit.targets[(row, t)]).powi(2);
                        count += 1;
                    }
                }
            }
            if failed {
                warnings.push(format!(
                    "alpha={} l1_ratio={} did not converge in an inner fold",
                    alphas[ai], cfg.l1_ratios[ri]
                ));
                continue;
            }
            let mse = sse / count as f64;
            if best.is_none_or(|(b, _, _)| mse < b) {
                best = Some((mse, ri, ai));
            }
        }
    }
    let (_, ri, ai) = best.ok_or_else(|| Error::NoConvergence {
        iterations: cfg.max_iter,
        kkt_residual: f64::NAN,
    })?;
    let (alpha, l1_ratio) = (alphas[ai], cfg.l1_ratios[ri]);

    let mut oof = DMatrix::zeros(n, unit.tasks.len());
    for f in 0..cfg.inner_folds {
        let pred = path_preds[ri * cfg.inner_folds + f][ai].as_ref().expect("selected point converged");
        for (local, &row) in inner_rows[f].iter().enumerate() {
            oof.set_row(row, &pred.row(local));
        }
    }
    let model = fit_warm(x, &y_unit, &fit_options(cfg, alpha, l1_ratio), None)?;
    let test = predict(&model, x_test)?;

    Ok(UnitFold {
        test: unit
            .scored
            .iter()
            .zip(&scored_local)
            .map(|(&t, &l)| (t, test.column(l).iter().copied().collect()))
            .collect(),
        oof: unit
            .scored
            .iter()
            .zip(&scored_local)
            .map(|(&t, &l)| (t, oof.column(l).iter().copied().collect()))
            .collect(),
        alpha,
        l1_ratio,
        warnings,
        model: Some(model),
    })
}

fn score(pred: &[f64], truth: &[f64]) -> (Option<f64>, f64, Option<String>) {
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / truth.len() as f64;
    match pearson_r(pred, truth) {
        Ok(c) => (Some(c.r), mse, None),
        Err(Error::DegenerateColumn(which)) if which == "y" => (None, mse, Some("constant held-out target; fold skipped".into())),
        Err(Error::DegenerateColumn(_)) => (Some(0.0), mse, Some("constant prediction; r set to 0".into())),
        Err(e) => (None, mse, Some(format!("r undefined: {e}"))),
    }
}

fn summarize(tasks: &[String], folds: &[FoldMetric]) -> Vec<TaskSummary> {
    tasks
        .iter()
        .map(|task| {
            let used: Vec<&FoldMetric> = folds.iter().filter(|m| &m.task == task && m.r.is_some()).collect();
            let k = used.len();
            TaskSummary {
                task: task.clone(),
                mean_r: (k > 0).then(|| used.iter().map(|m| m.r.unwrap()).sum::<f64>() / k as f64),
                mean_mse: (k > 0).then(|| used.iter().map(|m| m.mse).sum::<f64>() / k as f64),
                folds_used: k,
            }
        })
        .collect()
}

struct Plan {
    reported: Vec<usize>,
    assignment: FoldAssignment,
    fold_rows: Vec<Vec<usize>>,
}

fn plan(y: &TaskBlock, row_users: &[String], cfg: &CvConfig) -> Result<Plan> {
    if row_users.len() != y.nrows() {
        return Err(Error::Schema(format!(
            "{} row users for {} rows",
            row_users.len(),
            y.nrows()
        )));
    }
    let reported = if cfg.report_tasks.is_empty() {
        (0..y.ntasks()).collect()
    } else {
        cfg.report_tasks
            .iter()
            .map(|t| y.index_of(t).ok_or_else(|| Error::Config(format!("unknown task `{t}`"))))
            .collect::<Result<Vec<_>>>()?
    };
    let assignment = grouped_kfold(row_users, cfg.folds, cfg.seed)?;
    let fold_rows = rows_by_fold(&assignment.row_folds(row_users), cfg.folds);
    Ok(Plan {
        reported,
        assignment,
        fold_rows,
    })
}

struct SetFold {
    units: Vec<UnitFold>,
}

fn run_set_fold(
    x: &DesignMatrix,
    y: &TaskBlock,
    row_users: &[String],
    units: &[Unit],
    plan: &Plan,
    fold: usize,
    cfg: &CvConfig,
) -> Result<SetFold> {
    let test_rows = &plan.fold_rows[fold];
    let train_rows: Vec<usize> = (0..x.nrows()).filter(|i| !test_rows.contains(i)).collect();
    let x_train = x.select_rows(&train_rows);
    let y_train = y.select_rows(&train_rows);
    let train_users: Vec<String> = train_rows.iter().map(|&i| row_users[i].clone()).collect();
    let x_test = x.select_rows(test_rows);
    let seed = derive_seed(cfg.seed, fold as u64 + 1);
    let units = units
        .iter()
        .map(|u| fit_unit(&x_train, &y_train, &train_users, &x_test, u, cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(SetFold { units })
}

fn metrics_for(set_fold: &SetFold, y: &TaskBlock, test_rows: &[usize], fold: usize) -> (Vec<FoldMetric>, Vec<String>) {
    let mut metrics = Vec::new();
    let mut warnings = Vec::new();
    for unit in &set_fold.units {
        warnings.extend(unit.warnings.iter().map(|w| format!("fold {fold}: {w}")));
        for (t, pred) in &unit.test {
            let truth: Vec<f64> = test_rows.iter().map(|&i| y.targets[(i, *t)]).collect();
            let (r, mse, note) = score(pred, &truth);
            if let Some(n) = &note {
                warnings.push(format!("fold {fold} task {}: {n}", y.names[*t]));
            }
            metrics.push(FoldMetric {
                fold,
                task: y.names[*t].clone(),
                n_test: truth.len(),
                r,
                mse,
                alpha: unit.alpha,
                l1_ratio: unit.l1_ratio,
                note,
            });
        }
    }
    (metrics, warnings)
}

fn build_report(mode: Mode, n_features: usize, y: &TaskBlock, plan: &Plan, per_fold: Vec<(Vec<FoldMetric>, Vec<String>)>) -> CvReport {
    let mut folds = Vec::new();
    let mut warnings = Vec::new();
    for (m, w) in per_fold {
        folds.extend(m);
        warnings.extend(w);
    }
    let tasks: Vec<String> = plan.reported.iter().map(|&t| y.names[t].clone()).collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    CvReport {
        mode,
        n_features,
        summary: summarize(&tasks, &folds),
        folds,
        assignment: plan.assignment.clone(),
        warnings,
    }
}

/// Grouped k-fold cross-validation of one feature set.
pub fn cross_validate(
    x: &DesignMatrix,
    y: &TaskBlock,
    row_users: &[String],
    mode: Mode,
    cfg: &CvConfig,
) -> Result<CvReport> {
    if x.nrows() != y.nrows() {
        return Err(Error::Schema(format!("{} design rows, {} target rows", x.nrows(), y.nrows())));
    }
    let plan = plan(y, row_users, cfg)?;
    let units = units_for(mode, y, &plan.reported)?;
    let per_fold = (0..cfg.folds)
        .into_par_iter()
        .map(|f| {
            let sf = run_set_fold(x, y, row_users, &units, &plan, f, cfg)?;
            Ok(metrics_for(&sf, y, &plan.fold_rows[f], f))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build_report(mode, x.ncols(), y, &plan, per_fold))
}

/// Cross-validates every feature set and a ridge combination of their
/// predictions. The combiner is trained on out-of-fold predictions of the
/// training users only.
pub fn cross_validate_stacked(
    sets: &[(String, DesignMatrix)],
    y: &TaskBlock,
    row_users: &[String],
    mode: Mode,
    cfg: &CvConfig,
) -> Result<StackedReport> {
    if sets.is_empty() {
        return Err(Error::InvalidInput("no feature sets".into()));
    }
    if let Some((name, _)) = sets.iter().find(|(_, x)| x.nrows() != y.nrows()) {
        return Err(Error::Schema(format!("feature set `{name}` has the wrong number of rows")));
    }
    let plan = plan(y, row_users, cfg)?;
    let units = units_for(mode, y, &plan.reported)?;
    let stack_names: Vec<String> = sets.iter().map(|(n, _)| format!("pred_{n}")).collect();

    let per_fold = (0..cfg.folds)
        .into_par_iter()
        .map(|f| {
            let set_folds = sets
                .iter()
                .map(|(_, x)| run_set_fold(x, y, row_users, &units, &plan, f, cfg))
                .collect::<Result<Vec<_>>>()?;
            let test_rows = &plan.fold_rows[f];
            let per_set: Vec<_> = set_folds.iter().map(|sf| metrics_for(sf, y, test_rows, f)).collect();

            let mut combo = Vec::new();
            for &t in &plan.reported {
                let column = |sf: &SetFold, test: bool| -> Vec<f64> {
                    sf.units
                        .iter()
                        .flat_map(|u| if test { &u.test } else { &u.oof })
                        .find(|(task, _)| *task == t)
                        .map(|(_, p)| p.clone())
                        .expect("every reported task is scored")
                };
                let train_cols: Vec<Vec<f64>> = set_folds.iter().map(|sf| column(sf, false)).collect();
                let test_cols: Vec<Vec<f64>> = set_folds.iter().map(|sf| column(sf, true)).collect();
                let train_rows: Vec<usize> = (0..y.nrows()).filter(|i| !test_rows.contains(i)).collect();
                let x2 = DesignMatrix::new(
                    stack_names.clone(),
                    DMatrix::from_fn(train_rows.len(), sets.len(), |i, s| train_cols[s][i]),
                )?;
                let x2_test = DesignMatrix::new(
                    stack_names.clone(),
                    DMatrix::from_fn(test_rows.len(), sets.len(), |i, s| test_cols[s][i]),
                )?;
                let y2: Vec<f64> = train_rows.iter().map(|&i| y.targets[(i, t)]).collect();
                let opts = fit_options(cfg, cfg.stack_ridge_alpha, 0.0);
                let model = super::elasticnet_fit(&x2, &y2, &opts)?;
                let pred: Vec<f64> = predict(&model, &x2_test)?.column(0).iter().copied().collect();
                combo.push((t, pred));
            }
            let combo_fold = SetFold {
                units: vec![UnitFold {
                    test: combo,
                    oof: Vec::new(),
                    alpha: cfg.stack_ridge_alpha,
                    l1_ratio: 0.0,
                    warnings: Vec::new(),
                    model: None,
                }],
            };
            Ok((per_set, metrics_for(&combo_fold, y, test_rows, f)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut set_folds: Vec<Vec<(Vec<FoldMetric>, Vec<String>)>> = vec![Vec::new(); sets.len()];
    let mut combo_folds = Vec::new();
    for (per_set, combo) in per_fold {
        for (s, m) in per_set.into_iter().enumerate() {
            set_folds[s].push(m);
        }
        combo_folds.push(combo);
    }
    let reports = sets
        .iter()
        .zip(set_folds)
        .map(|((name, x), folds)| (name.clone(), build_report(mode, x.ncols(), y, &plan, folds)))
        .collect();
    Ok(StackedReport {
        sets: reports,
        combination: build_report(mode, sets.len(), y, &plan, combo_folds),
    })
}

/// Picks hyperparameters by the inner grouped search over all users and
/// refits on everyone. Returns one model per reported task in single-task
/// mode and one joint model in multi-task mode.
pub fn fit_tuned(
    x: &DesignMatrix,
    y: &TaskBlock,
    row_users: &[String],
    mode: Mode,
    cfg: &CvConfig,
) -> Result<Vec<RegressionModel>> {
    if x.nrows() != y.nrows() || row_users.len() != y.nrows() {
        return Err(Error::Schema("design, targets and users differ in length".into()));
    }
    let reported = plan(y, row_users, cfg)?.reported;
    let seed = derive_seed(cfg.seed, 0);
    units_for(mode, y, &reported)?
        .iter()
        .map(|u| {
            let fold = fit_unit(x, y, row_users, x, u, cfg, seed)?;
            let mut model = fold.model.expect("fitted unit carries its model");
            model.seed = Some(cfg.seed);
            Ok(model)
        })
        .collect()
}
