//! Cyclic coordinate descent for the elastic net and its row-sparse multi-task
//! counterpart. Both work on a column-major `n x p` design and minimize
//!
//! ```text
//! 1/(2n) ||Y - XW||_F^2 + alpha * rho * sum_j ||W_j||_2 + alpha * (1 - rho) / 2 * ||W||_F^2
//! ```
//!
//! where `W_j` is the weight row of feature `j` across tasks. With one task the
//! row norm is an absolute value and this is the ordinary elastic net.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub alpha: f64,
    pub l1_ratio: f64,
}

impl Penalty {
    pub fn l1(&self) -> f64 {
        self.alpha * self.l1_ratio
    }

    pub fn l2(&self) -> f64 {
        self.alpha * (1.0 - self.l1_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stopping {
    /// Largest coefficient change in a sweep below which the solver checks KKT.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Row-major `p x t` weights.
    pub weights: Vec<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn soft_threshold(z: f64, threshold: f64) -> f64 {
    if z > threshold {
        z - threshold
    } else if z < -threshold {
        z + threshold
    } else {
        0.0
    }
}

struct Problem<'a> {
    x: &'a [f64],
    n: usize,
    p: usize,
    col_sq: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(x: &'a [f64], n: usize) -> Self {
        let p = if n == 0 { 0 } else { x.len() / n };
        let col_sq = (0..p)
            .map(|j| {
                let c = &x[j * n..(j + 1) * n];
                dot(c, c) / n as f64
            })
            .collect();
        Self { x, n, p, col_sq }
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    /// Residual columns `y_t - X w_t` for column-major targets.
    fn residuals(&self, y: &[f64], t: usize, w: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut r = y.to_vec();
        for j in 0..self.p {
            let col = self.column(j);
            for task in 0..t {
                let wjt = w[j * t + task];
                if wjt != 0.0 {
                    r[task * n..(task + 1) * n]
                        .iter_mut()
                        .zip(col)
                        .for_each(|(ri, xi)| *ri -= wjt * xi);
                }
            }
        }
        r
    }

    fn objective(&self, r: &[f64], w: &[f64], t: usize, pen: &Penalty) -> f64 {
        let fit = dot(r, r) / (2.0 * self.n as f64);
        let (mut group, mut ridge) = (0.0, 0.0);
        for row in w.chunks_exact(t) {
            let sq = dot(row, row);
            group += sq.sqrt();
            ridge += sq;
        }
        fit + pen.l1() * group + 0.5 * pen.l2() * ridge
    }

    fn kkt_residual(&self, r: &[f64], w: &[f64], t: usize, pen: &Penalty) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        let mut grad = vec![0.0; t];
        for j in 0..self.p {
            let col = self.column(j);
            for (task, g) in grad.iter_mut().enumerate() {
                *g = -dot(col, &r[task * n..(task + 1) * n]) / n as f64;
            }
            let row = &w[j * t..(j + 1) * t];
            let norm = dot(row, row).sqrt();
            let res = if norm > 0.0 {
                grad.iter()
                    .zip(row)
                    .map(|(g, wj)| (g + pen.l2() * wj + pen.l1() * wj / norm).powi(2))
                    .sum::<f64>()
                    .sqrt()
            } else {
                (dot(&grad, &grad).sqrt() - pen.l1()).max(0.0)
            };
            worst = worst.max(res);
        }
        worst
    }
}

/// KKT residual of `weights` (row-major `p x t`) for the penalized problem.
pub fn kkt_residual(x: &[f64], n: usize, y: &[f64], t: usize, weights: &[f64], pen: &Penalty) -> f64 {
    let prob = Problem::new(x, n);
    let r = prob.residuals(y, t, weights);
    prob.kkt_residual(&r, weights, t, pen)
}

/// Objective value of `weights` (row-major `p x t`).
pub fn objective(x: &[f64], n: usize, y: &[f64], t: usize, weights: &[f64], pen: &Penalty) -> f64 {
    let prob = Problem::new(x, n);
    let r = prob.residuals(y, t, weights);
    prob.objective(&r, weights, t, pen)
}

fn check_objective(prob: &Problem<'_>, r: &[f64], w: &[f64], t: usize, pen: &Penalty, last: &mut f64) {
    if cfg!(debug_assertions) {
        let obj = prob.objective(r, w, t, pen);
        debug_assert!(
            obj <= *last + 1e-10 * last.abs().max(1.0),
            "objective increased from {last} to {obj}"
        );
        *last = obj;
    }
}

/// Scalar elastic net on column-major `x` (`n` rows) and target `y`.
pub fn elastic_net_cd(
    x: &[f64],
    n: usize,
    y: &[f64],
    pen: &Penalty,
    stop: &Stopping,
    warm_start: Option<&[f64]>,
) -> Result<Solution> {
    let prob = Problem::new(x, n);
    let mut w = warm_start.map_or_else(|| vec![0.0; prob.p], <[f64]>::to_vec);
    let mut r = prob.residuals(y, 1, &w);
    let (l1, l2) = (pen.l1(), pen.l2());
    let mut last = f64::INFINITY;
    let mut kkt = f64::INFINITY;

    for sweep in 1..=stop.max_iter {
        let mut max_change = 0.0f64;
        for j in 0..prob.p {
            let c = prob.col_sq[j];
            if c == 0.0 {
                continue;
            }
            let col = prob.column(j);
            let old = w[j];
            let z = dot(col, &r) / n as f64 + c * old;
            let new = soft_threshold(z, l1) / (c + l2);
            if new != old {
                let delta = new - old;
                r.iter_mut().zip(col).for_each(|(ri, xi)| *ri -= delta * xi);
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        check_objective(&prob, &r, &w, 1, pen, &mut last);
        if max_change < stop.tol {
            r = prob.residuals(y, 1, &w);
            kkt = prob.kkt_residual(&r, &w, 1, pen);
            if kkt <= 10.0 * stop.tol {
                return Ok(Solution {
                    weights: w,
                    sweeps: sweep,
                    kkt_residual: kkt,
                });
            }
        }
    }
    if !kkt.is_finite() {
        kkt = prob.kkt_residual(&prob.residuals(y, 1, &w), &w, 1, pen);
    }
    Err(Error::NoConvergence {
        iterations: stop.max_iter,
        kkt_residual: kkt,
    })
}

/// Block coordinate descent for `t` tasks; `y` holds the targets column-major
/// (`n x t`). Each feature row is either zero or shrunk radially.
pub fn group_cd(
    x: &[f64],
    n: usize,
    y: &[f64],
    t: usize,
    pen: &Penalty,
    stop: &Stopping,
    warm_start: Option<&[f64]>,
) -> Result<Solution> {
    let prob = Problem::new(x, n);
    let mut w = warm_start.map_or_else(|| vec![0.0; prob.p * t], <[f64]>::to_vec);
    let mut r = prob.residuals(y, t, &w);
    let (l1, l2) = (pen.l1(), pen.l2());
    let mut z = vec![0.0; t];
    let mut last = f64::INFINITY;
    let mut kkt = f64::INFINITY;

    for sweep in 1..=stop.max_iter {
        let mut max_change = 0.0f64;
        for j in 0..prob.p {
            let c = prob.col_sq[j];
            if c == 0.0 {
                continue;
            }
            let col = prob.column(j);
            let row = &mut w[j * t..(j + 1) * t];
            for (task, zt) in z.iter_mut().enumerate() {
                *zt = dot(col, &r[task * n..(task + 1) * n]) / n as f64 + c * row[task];
            }
            let norm = dot(&z, &z).sqrt();
            let shrink = if norm <= l1 { 0.0 } else { (1.0 - l1 / norm) / (c + l2) };
            for task in 0..t {
                let new = z[task] * shrink;
                let delta = new - row[task];
                if delta != 0.0 {
                    r[task * n..(task + 1) * n]
                        .iter_mut()
                        .zip(col)
                        .for_each(|(ri, xi)| *ri -= delta * xi);
                    row[task] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
        }
        check_objective(&prob, &r, &w, t, pen, &mut last);
        if max_change < stop.tol {
            r = prob.residuals(y, t, &w);
            kkt = prob.kkt_residual(&r, &w, t, pen);
            if kkt <= 10.0 * stop.tol {
                return Ok(Solution {
                    weights: w,
                    sweeps: sweep,
                    kkt_residual: kkt,
                });
            }
        }
    }
    if !kkt.is_finite() {
        kkt = prob.kkt_residual(&prob.residuals(y, t, &w), &w, t, pen);
    }
    Err(Error::NoConvergence {
        iterations: stop.max_iter,
        kkt_residual: kkt,
    })
}
