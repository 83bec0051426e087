//! Closed-form correlation references and a literal Benjamini-Hochberg.

/// Textbook product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// First-order partial correlation by the recursion formula.
pub fn partial_one(x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let (rxy, rxz, ryz) = (pearson(x, y), pearson(x, z), pearson(y, z));
    (rxy - rxz * ryz) / ((1.0 - rxz * rxz) * (1.0 - ryz * ryz)).sqrt()
}

/// Step-up by enumeration: rejects every hypothesis whose rank is at most the
/// largest rank `i` with `p_(i) <= i q / m`. Adjusted values are
/// `min_{j >= i} m p_(j) / j`, capped at 1, computed by a double loop.
pub fn bh(p: &[f64], q: f64) -> (Vec<f64>, Vec<bool>) {
    let m = p.len();
    let mut sorted: Vec<(f64, usize)> = p.iter().copied().zip(0..).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut adjusted = vec![0.0; m];
    for i in 0..m {
        let mut best = f64::INFINITY;
        for (j, &(pj, _)) in sorted.iter().enumerate().skip(i) {
            best = best.min(pj * (m as f64 / (j + 1) as f64));
        }
        adjusted[sorted[i].1] = best.min(1.0);
    }
    let mut cutoff = 0;
    for (i, &(pi, _)) in sorted.iter().enumerate() {
        if pi * (m as f64 / (i + 1) as f64) <= q {
            cutoff = i + 1;
        }
    }
    let mut flags = vec![false; m];
    for &(_, idx) in &sorted[..cutoff] {
        flags[idx] = true;
    }
    (adjusted, flags)
}
