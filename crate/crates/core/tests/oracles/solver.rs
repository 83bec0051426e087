//! Least squares and an accelerated proximal-gradient reference for the
//! row-sparse multi-task objective.

use nalgebra::DMatrix;

/// Minimum-norm least squares through the SVD pseudo-inverse.
pub fn min_norm_ls(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = x.clone().svd(true, true);
    svd.solve(y, 1e-12).expect("svd with both factors")
}

/// `1/(2n) ||Y - XW||^2 + l1 sum_j ||W_j||_2 + l2/2 ||W||^2`.
pub fn objective(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>, l1: f64, l2: f64) -> f64 {
    let n = x.nrows() as f64;
    let r = y - x * w;
    let rows: f64 = (0..w.nrows()).map(|j| w.row(j).norm()).sum();
    r.norm_squared() / (2.0 * n) + l1 * rows + 0.5 * l2 * w.norm_squared()
}

fn prox_rows(v: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    let mut out = v.clone();
    for j in 0..v.nrows() {
        let norm = v.row(j).norm();
        let scale = if norm <= threshold { 0.0 } else { 1.0 - threshold / norm };
        out.row_mut(j).scale_mut(scale);
    }
    out
}

/// FISTA with gradient-based restart, run until the iterate stops moving.
pub fn fista(x: &DMatrix<f64>, y: &DMatrix<f64>, l1: f64, l2: f64, iters: usize) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let gram = x.transpose() * x / n;
    let xty = x.transpose() * y / n;
    let lipschitz = gram.clone().symmetric_eigenvalues().max() + l2;
    let step = 1.0 / lipschitz;
    let mut w = DMatrix::zeros(x.ncols(), y.ncols());
    let mut z = w.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad = &gram * &z - &xty + &z * l2;
        let next = prox_rows(&(&z - grad * step), l1 * step);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let moved = &next - &w;
        if (&z - &next).dot(&moved) > 0.0 {
            // restart momentum
            z = next.clone();
            t = 1.0;
        } else {
            z = &next + &moved * ((t - 1.0) / t_next);
            t = t_next;
        }
        let change = moved.amax();
        w = next;
        if change < 1e-15 {
            break;
        }
    }
    w
}

/// Center every column, then scale to unit population sd.
pub fn standardize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let m = col.sum() / n;
        col.add_scalar_mut(-m);
        let sd = (col.norm_squared() / n).sqrt();
        col /= sd;
    }
    out
}

pub fn center(y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows() as f64;
    let mut out = y.clone();
    for mut col in out.column_iter_mut() {
        let m = col.sum() / n;
        col.add_scalar_mut(-m);
    }
    out
}
