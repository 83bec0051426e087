use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster per point, numbered by first appearance.
    pub labels: Vec<usize>,
    pub inertia: f64,
}

/// Lloyd's k-means on row-major `points` of width `dim`, seeded by furthest-point
/// traversal from a random start and restarted `restarts` times.
pub fn kmeans(points: &[f64], dim: usize, k: usize, options: &KMeansOptions) -> Result<KMeansResult> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::InvalidInput("point buffer does not match dimension".into()));
    }
    let n = points.len() / dim;
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot form {k} clusters from {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..options.restarts.max(1) {
        let start = rng.random_range(0..n);
        let run = lloyd(points, dim, k, start, options.max_iter);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one restart");
    best.labels = relabel_by_first_appearance(&best.labels);
    Ok(best)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn furthest_point_seeds(points: &[f64], dim: usize, k: usize, start: usize) -> Vec<usize> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut chosen = vec![start];
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(start))).collect();
    while chosen.len() < k {
        let mut pick = None;
        let mut far = 0.0;
        for (i, &d) in nearest.iter().enumerate() {
            if d > far {
                far = d;
                pick = Some(i);
            }
        }
        // All remaining points coincide with a seed: take the first unused one.
        let pick = pick.unwrap_or_else(|| (0..n).find(|i| !chosen.contains(i)).expect("k <= n"));
        chosen.push(pick);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), row(pick)));
        }
        nearest[pick] = 0.0;
    }
    chosen
}

fn lloyd(points: &[f64], dim: usize, k: usize, start: usize, max_iter: usize) -> KMeansResult {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centers: Vec<f64> = furthest_point_seeds(points, dim, k, start)
        .into_iter()
        .flat_map(|i| row(i).to_vec())
        .collect();
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];

    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for i in 0..n {
            let (c, d) = nearest_center(row(i), &centers, dim);
            dists[i] = d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        changed |= fill_empty_clusters(&mut labels, &mut dists, k);
        if !changed {
            break;
        }
        centers = recompute_centers(points, dim, &labels, k);
    }
    let inertia = (0..n)
        .map(|i| sq_dist(row(i), &centers[labels[i] * dim..(labels[i] + 1) * dim]))
        .sum();
    KMeansResult { labels, inertia }
}

fn nearest_center(p: &[f64], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Moves the worst-fitting point of a multi-point cluster into each empty cluster.
fn fill_empty_clusters(labels: &mut [usize], dists: &mut [f64], k: usize) -> bool {
    let mut moved = false;
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .expect("k <= n guarantees a donor");
        sizes[labels[donor]] -= 1;
        labels[donor] = empty;
        sizes[empty] = 1;
        dists[donor] = 0.0;
        moved = true;
    }
    moved
}

fn recompute_centers(points: &[f64], dim: usize, labels: &[usize], k: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for d in 0..dim {
            sums[l * dim + d] += points[i * dim + d];
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        for d in 0..dim {
            sums[c * dim + d] /= count as f64;
        }
    }
    sums
}

pub(crate) fn relabel_by_first_appearance(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_obvious_groups() {
        let pts = [0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 5.0, 5.0, 5.1, 5.0, 10.0, 0.0];
        let res = kmeans(&pts, 2, 3, &KMeansOptions::default()).unwrap();
        assert_eq!(res.labels, vec![0, 0, 0, 1, 1, 2]);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let pts = [0.0, 1.0, 2.0, 3.0];
        let res = kmeans(&pts, 1, 4, &KMeansOptions::default()).unwrap();
        assert_eq!(res.labels, vec![0, 1, 2, 3]);
        assert_eq!(res.inertia, 0.0);
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = [1.0, 1.0, 1.0, 2.0];
        let res = kmeans(&pts, 1, 3, &KMeansOptions::default()).unwrap();
        let mut seen = res.labels.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn deterministic_for_seed() {
        let pts: Vec<f64> = (0..40).map(|i| ((i * 37) % 17) as f64).collect();
        let opts = KMeansOptions { seed: 9, ..Default::default() };
        assert_eq!(kmeans(&pts, 2, 4, &opts).unwrap(), kmeans(&pts, 2, 4, &opts).unwrap());
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kmeans(&[0.0, 1.0], 1, 3, &KMeansOptions::default()).is_err());
        assert!(kmeans(&[0.0, 1.0], 1, 0, &KMeansOptions::default()).is_err());
    }
}
