//! Seeded regression simulations.

use nalgebra::DMatrix;
use pixmood_core::mtlearn::{DesignMatrix, TaskBlock};
use rand::Rng;
use rand_distr::StandardNormal;

use super::rng;

pub struct Dataset {
    pub x: DesignMatrix,
    pub y: TaskBlock,
    pub users: Vec<String>,
}

fn normal(r: &mut impl Rng) -> f64 {
    r.sample(StandardNormal)
}

fn zscale(v: &mut [f64]) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    v.iter_mut().for_each(|a| *a = (*a - m) / sd);
}

fn users(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("u{i:04}")).collect()
}

fn columns(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("f{j:02}")).collect()
}

/// `y = X w + e` with `sd(Xw) / sd(e) = snr`, target z-scaled. `snr = 0` gives
/// a target independent of `X`.
pub fn linear(seed: u64, n: usize, p: usize, snr: f64) -> Dataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, p, |_, _| normal(&mut r));
    let w: Vec<f64> = (0..p).map(|_| normal(&mut r)).collect();
    let signal: Vec<f64> = (0..n).map(|i| (0..p).map(|j| x[(i, j)] * w[j]).sum()).collect();
    let sd_signal = (signal.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    let mut y: Vec<f64> = signal
        .iter()
        .map(|s| {
            let e = normal(&mut r);
            if snr > 0.0 {
                s + e * sd_signal / snr
            } else {
                e
            }
        })
        .collect();
    zscale(&mut y);
    Dataset {
        x: DesignMatrix::new(columns(p), x).unwrap(),
        y: TaskBlock::single("y", &y),
        users: users(n),
    }
}

pub const TASKS: [&str; 4] = ["depression", "anxiety", "age", "gender"];

/// Four tasks on a shared sparse support. Depression and anxiety share most
/// of their weights and are the noisiest; age is the cleanest; gender is a
/// thresholded 0/1 outcome. All targets are z-scaled.
pub fn shared_support(seed: u64, n: usize, p: usize, support: usize) -> Dataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, p, |_, _| normal(&mut r));
    let base: Vec<f64> = (0..support).map(|_| normal(&mut r)).collect();
    // (loading on the shared weights, idiosyncratic weight sd, noise sd)
    let profile = [(1.0, 0.2, 2.0), (0.9, 0.3, 2.0), (0.7, 0.4, 1.0), (0.6, 0.4, 1.2)];
    let mut targets = DMatrix::zeros(n, 4);
    for (t, &(load, own, noise)) in profile.iter().enumerate() {
        let w: Vec<f64> = base.iter().map(|b| load * b + own * normal(&mut r)).collect();
        let mut col: Vec<f64> = (0..n)
            .map(|i| (0..support).map(|j| x[(i, j)] * w[j]).sum::<f64>() + noise * normal(&mut r))
            .collect();
        if t == 3 {
            col.iter_mut().for_each(|v| *v = if *v > 0.0 { 1.0 } else { 0.0 });
        }
        zscale(&mut col);
        targets.set_column(t, &nalgebra::DVector::from_vec(col));
    }
    Dataset {
        x: DesignMatrix::new(columns(p), x).unwrap(),
        y: TaskBlock::new(TASKS.iter().map(|s| s.to_string()).collect(), targets).unwrap(),
        users: users(n),
    }
}
