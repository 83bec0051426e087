//! Correlation statistics: standardization, Pearson and partial correlation with
//! t-test p-values, Benjamini-Hochberg adjustment and the feature/outcome sweep.

mod correlate;
pub mod dist;
mod fdr;

use crate::error::{Error, Result};

pub use correlate::{
    correlate_all, AnalysisSpec, CorrelationResult, FeatureColumn, FeatureTable, OutcomeRecord, OutcomeTable,
    OUTCOME_COLUMNS,
};
pub use fdr::{bh_correct, BhOutcome};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standard deviation with the `n - 1` denominator.
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

fn is_degenerate(centered_ss: f64, x: &[f64]) -> bool {
    let raw_ss: f64 = x.iter().map(|v| v * v).sum();
    centered_ss <= f64::EPSILON * f64::EPSILON * x.len() as f64 * raw_ss
}

/// Rescales to mean 0 and sample standard deviation 1.
pub fn z_normalize(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::InsufficientData { have: x.len(), need: 2 });
    }
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    if is_degenerate(ss, x) {
        return Err(Error::DegenerateColumn("input".into()));
    }
    let sd = (ss / (x.len() as f64 - 1.0)).sqrt();
    Ok(x.iter().map(|v| (v - m) / sd).collect())
}

/// A correlation coefficient with its two-tailed t-test p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
    pub df: usize,
}

fn t_test(r: f64, n: usize, df: usize) -> Correlation {
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df as f64 / (1.0 - r * r)).sqrt();
        dist::student_t_two_tailed(t, df as f64)
    };
    Correlation { r, p, n, df }
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData { have: n, need: 3 });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if is_degenerate(sxx, x) {
        return Err(Error::DegenerateColumn("x".into()));
    }
    if is_degenerate(syy, y) {
        return Err(Error::DegenerateColumn("y".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(t_test(r, n, n - 2))
}

/// Orthonormal basis of `[1, covariates...]` by modified Gram-Schmidt with one
/// reorthogonalization pass.
fn covariate_basis(n: usize, covariates: &[(&str, &[f64])]) -> Result<Vec<Vec<f64>>> {
    let mut basis: Vec<Vec<f64>> = vec![vec![1.0 / (n as f64).sqrt(); n]];
    let mut collinear = Vec::new();
    for &(name, col) in covariates {
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = col.to_vec();
        for _ in 0..2 {
            for q in &basis {
                let proj: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= proj * qi);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-10 * norm0 {
            collinear.push(name.to_string());
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    if collinear.is_empty() {
        Ok(basis)
    } else {
        Err(Error::Collinear(collinear))
    }
}

fn residualize(x: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = x.to_vec();
    for _ in 0..2 {
        for q in basis {
            let proj: f64 = q.iter().zip(&r).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= proj * qi);
        }
    }
    r
}

/// Correlation of `x` and `y` after removing the least-squares fit on an
/// intercept plus the named covariates.
pub fn partial_corr(x: &[f64], y: &[f64], covariates: &[(&str, &[f64])]) -> Result<Correlation> {
    if covariates.is_empty() {
        return pearson_r(x, y);
    }
    let n = x.len();
    if y.len() != n || covariates.iter().any(|(_, c)| c.len() != n) {
        return Err(Error::InvalidInput("x, y and covariates differ in length".into()));
    }
    let k = covariates.len();
    if n < k + 3 {
        return Err(Error::InsufficientData { have: n, need: k + 3 });
    }
    let basis = covariate_basis(n, covariates)?;
    let rx = residualize(x, &basis);
    let ry = residualize(y, &basis);
    let nx = rx.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = ry.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tiny = |res: f64, raw: &[f64]| res <= 1e-10 * raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if tiny(nx, x) {
        return Err(Error::DegenerateResidual("x".into()));
    }
    if tiny(ny, y) {
        return Err(Error::DegenerateResidual("y".into()));
    }
    let dot: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let r = (dot / (nx * ny)).clamp(-1.0, 1.0);
    Ok(t_test(r, n, n - 2 - k))
}
