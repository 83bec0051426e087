//! Elastic-net and L2/1 multi-task linear regression with user-grouped
//! cross-validation.

mod cv;
pub mod solver;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use solver::{Penalty, Stopping};

pub use cv::{
    cross_validate, cross_validate_stacked, default_alpha_grid, fit_tuned, grouped_kfold, CvConfig, CvReport,
    FoldAssignment, FoldMetric, Mode, StackedReport, TaskSummary, DEFAULT_FOLDS, DEFAULT_INNER_FOLDS,
    DEFAULT_L1_RATIOS, DEFAULT_STACK_RIDGE_ALPHA,
};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Named feature columns, one row per user. Values must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    columns: Vec<String>,
    data: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(columns: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if columns.len() != data.ncols() {
            return Err(Error::Schema(format!(
                "{} column names for {} columns",
                columns.len(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design matrix has non-finite values".into()));
        }
        Ok(Self { columns, data })
    }

    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Schema(format!("row {bad} does not have {p} values")));
        }
        let data = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(columns, data)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            data: self.data.select_rows(rows),
        }
    }
}

/// Regression targets aligned with a design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBlock {
    names: Vec<String>,
    targets: DMatrix<f64>,
}

impl TaskBlock {
    pub fn new(names: Vec<String>, targets: DMatrix<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidInput("at least one task is required".into()));
        }
        if names.len() != targets.ncols() {
            return Err(Error::Schema(format!(
                "{} task names for {} target columns",
                names.len(),
                targets.ncols()
            )));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("targets have non-finite values".into()));
        }
        Ok(Self { names, targets })
    }

    pub fn single(name: &str, y: &[f64]) -> Self {
        Self {
            names: vec![name.to_string()],
            targets: DMatrix::from_column_slice(y.len(), 1, y),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn ntasks(&self) -> usize {
        self.names.len()
    }

    pub fn nrows(&self) -> usize {
        self.targets.nrows()
    }

    pub fn column(&self, t: usize) -> TaskBlock {
        Self {
            names: vec![self.names[t].clone()],
            targets: self.targets.columns(t, 1).into_owned(),
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            targets: self.targets.select_rows(rows),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ConstantColumns {
    /// Zero-variance columns are an error.
    #[default]
    Reject,
    /// Zero-variance columns keep a zero weight.
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Overall penalty strength, `>= 0`.
    pub alpha: f64,
    /// Share of the penalty on the L1 (or row-L2) term, in `[0, 1]`.
    pub l1_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub standardize: bool,
    pub fit_intercept: bool,
    pub constant_columns: ConstantColumns,
}

impl FitOptions {
    pub fn new(alpha: f64, l1_ratio: f64) -> Self {
        Self {
            alpha,
            l1_ratio,
            ..Self::default()
        }
    }
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            l1_ratio: 0.5,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            standardize: true,
            fit_intercept: true,
            constant_columns: ConstantColumns::Reject,
        }
    }
}

/// A fitted linear model. Weights live in standardized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub feature_names: Vec<String>,
    pub task_names: Vec<String>,
    /// `weights[j][t]`: feature `j`, task `t`.
    pub weights: Vec<Vec<f64>>,
    /// Training target means, added back after the linear part.
    pub intercepts: Vec<f64>,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub alpha: f64,
    pub l1_ratio: f64,
    pub sweeps: usize,
    pub kkt_residual: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RegressionModel {
    /// Number of features with a nonzero weight on any task.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|row| row.iter().any(|&w| w != 0.0)).count()
    }

    /// Weights mapped back to raw feature units, `weights[j][t] / scale[j]`.
    pub fn raw_weights(&self) -> Vec<Vec<f64>> {
        self.weights
            .iter()
            .zip(&self.feature_scales)
            .map(|(row, s)| row.iter().map(|w| w / s).collect())
            .collect()
    }

    fn flat_weights(&self) -> Vec<f64> {
        self.weights.iter().flatten().copied().collect()
    }
}

fn validate_options(opts: &FitOptions) -> Result<()> {
    if !(opts.alpha >= 0.0 && opts.alpha.is_finite()) {
        return Err(Error::Config(format!("alpha {} must be >= 0", opts.alpha)));
    }
    if !(0.0..=1.0).contains(&opts.l1_ratio) {
        return Err(Error::Config(format!("l1_ratio {} outside [0, 1]", opts.l1_ratio)));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Config("tol must be positive and max_iter at least 1".into()));
    }
    Ok(())
}

struct Prepared {
    x: Vec<f64>,
    y: Vec<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    target_means: Vec<f64>,
}

fn prepare(x: &DesignMatrix, tasks: &TaskBlock, opts: &FitOptions) -> Result<Prepared> {
    let (n, p) = (x.nrows(), x.ncols());
    if tasks.nrows() != n {
        return Err(Error::Schema(format!("{n} design rows but {} target rows", tasks.nrows())));
    }
    if n == 0 {
        return Err(Error::InsufficientData { have: 0, need: 1 });
    }
    let mut data = x.data.as_slice().to_vec();
    let mut means = vec![0.0; p];
    let mut scales = vec![1.0; p];
    for j in 0..p {
        let col = &mut data[j * n..(j + 1) * n];
        if opts.fit_intercept || opts.standardize {
            means[j] = col.iter().sum::<f64>() / n as f64;
            col.iter_mut().for_each(|v| *v -= means[j]);
        }
        if opts.standardize {
            let sd = (col.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            let raw = x.data.column(j).iter().map(|v| v.abs()).fold(0.0, f64::max);
            if sd <= 1e-12 * raw.max(f64::MIN_POSITIVE) || sd == 0.0 {
                match opts.constant_columns {
                    ConstantColumns::Reject => return Err(Error::DegenerateColumn(x.columns[j].clone())),
                    ConstantColumns::Ignore => {
                        col.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                }
            }
            scales[j] = sd;
            col.iter_mut().for_each(|v| *v /= sd);
        }
    }
    let t = tasks.ntasks();
    let mut y = tasks.targets.as_slice().to_vec();
    let mut target_means = vec![0.0; t];
    if opts.fit_intercept {
        for (task, m) in target_means.iter_mut().enumerate() {
            let col = &mut y[task * n..(task + 1) * n];
            *m = col.iter().sum::<f64>() / n as f64;
            col.iter_mut().for_each(|v| *v -= *m);
        }
    }
    Ok(Prepared {
        x: data,
        y,
        means,
        scales,
        target_means,
    })
}

fn assemble(
    x: &DesignMatrix,
    tasks: &TaskBlock,
    prep: Prepared,
    sol: solver::Solution,
    opts: &FitOptions,
) -> RegressionModel {
    let t = tasks.ntasks();
    RegressionModel {
        feature_names: x.columns.clone(),
        task_names: tasks.names.clone(),
        weights: sol.weights.chunks(t).map(<[f64]>::to_vec).collect(),
        intercepts: prep.target_means,
        feature_means: prep.means,
        feature_scales: prep.scales,
        alpha: opts.alpha,
        l1_ratio: opts.l1_ratio,
        sweeps: sol.sweeps,
        kkt_residual: sol.kkt_residual,
        seed: None,
    }
}

pub(crate) fn fit_warm(
    x: &DesignMatrix,
    tasks: &TaskBlock,
    opts: &FitOptions,
    warm: Option<&RegressionModel>,
) -> Result<RegressionModel> {
    validate_options(opts)?;
    let prep = prepare(x, tasks, opts)?;
    let pen = Penalty {
        alpha: opts.alpha,
        l1_ratio: opts.l1_ratio,
    };
    let stop = Stopping {
        tol: opts.tol,
        max_iter: opts.max_iter,
    };
    let warm = warm.map(RegressionModel::flat_weights);
    let n = x.nrows();
    let sol = if tasks.ntasks() == 1 {
        solver::elastic_net_cd(&prep.x, n, &prep.y, &pen, &stop, warm.as_deref())?
    } else {
        solver::group_cd(&prep.x, n, &prep.y, tasks.ntasks(), &pen, &stop, warm.as_deref())?
    };
    Ok(assemble(x, tasks, prep, sol, opts))
}

/// Single-task elastic net by cyclic coordinate descent.
pub fn elasticnet_fit(x: &DesignMatrix, y: &[f64], opts: &FitOptions) -> Result<RegressionModel> {
    validate_options(opts)?;
    let tasks = TaskBlock::single("y", y);
    let prep = prepare(x, &tasks, opts)?;
    let sol = solver::elastic_net_cd(
        &prep.x,
        x.nrows(),
        &prep.y,
        &Penalty {
            alpha: opts.alpha,
            l1_ratio: opts.l1_ratio,
        },
        &Stopping {
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
        None,
    )?;
    Ok(assemble(x, &tasks, prep, sol, opts))
}

/// Multi-task regression with the row-wise L2/1 penalty, solved by block
/// coordinate descent. Accepts a single task, in which case it reduces to the
/// elastic net.
pub fn multitask_fit(x: &DesignMatrix, tasks: &TaskBlock, opts: &FitOptions) -> Result<RegressionModel> {
    validate_options(opts)?;
    let prep = prepare(x, tasks, opts)?;
    let sol = solver::group_cd(
        &prep.x,
        x.nrows(),
        &prep.y,
        tasks.ntasks(),
        &Penalty {
            alpha: opts.alpha,
            l1_ratio: opts.l1_ratio,
        },
        &Stopping {
            tol: opts.tol,
            max_iter: opts.max_iter,
        },
        None,
    )?;
    Ok(assemble(x, tasks, prep, sol, opts))
}

/// Predictions, one column per task.
pub fn predict(model: &RegressionModel, x: &DesignMatrix) -> Result<DMatrix<f64>> {
    if x.columns != model.feature_names {
        return Err(Error::Schema(format!(
            "model expects columns [{}], got [{}]",
            model.feature_names.join(", "),
            x.columns.join(", ")
        )));
    }
    let (n, t) = (x.nrows(), model.task_names.len());
    let mut out = DMatrix::from_fn(n, t, |_, task| model.intercepts[task]);
    for (j, row) in model.weights.iter().enumerate() {
        if row.iter().all(|&w| w == 0.0) {
            continue;
        }
        let (m, s) = (model.feature_means[j], model.feature_scales[j]);
        for i in 0..n {
            let z = (x.data[(i, j)] - m) / s;
            for (task, &w) in row.iter().enumerate() {
                out[(i, task)] += z * w;
            }
        }
    }
    Ok(out)
}
