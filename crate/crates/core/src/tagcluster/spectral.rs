use nalgebra::{DMatrix, SymmetricEigen};

use super::kmeans::{kmeans, relabel_by_first_appearance, KMeansOptions};
use super::{SimilarityMatrix, TagClusterModel};
use crate::error::{Error, Result};

const EIGEN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpectralOptions {
    pub kmeans: KMeansOptions,
}

impl SpectralOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            kmeans: KMeansOptions {
                seed,
                ..KMeansOptions::default()
            },
        }
    }
}

/// Normalized spectral clustering of the tags behind `sim` into `k` clusters.
pub fn spectral_cluster(sim: &SimilarityMatrix, k: usize, options: &SpectralOptions) -> Result<TagClusterModel> {
    let labels = spectral_labels(sim.values(), sim.len(), k, options)?;
    TagClusterModel::new(sim.vocab.clone(), labels, k, options.kmeans.seed)
}

/// Labels for an `n x n` row-major affinity matrix.
///
/// Rows with zero degree share one overflow cluster; the remaining rows are
/// split into the other `k - 1` clusters.
pub fn spectral_labels(affinity: &[f64], n: usize, k: usize, options: &SpectralOptions) -> Result<Vec<usize>> {
    if affinity.len() != n * n {
        return Err(Error::InvalidInput("affinity matrix is not square".into()));
    }
    if k < 2 || k > n {
        return Err(Error::Config(format!(
            "cluster count {k} must lie in [2, {n}]"
        )));
    }
    let degree: Vec<f64> = affinity.chunks_exact(n).map(|r| r.iter().sum()).collect();
    let (connected, isolated): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| degree[i] > 0.0);

    let spectral_k = if isolated.is_empty() { k } else { k - 1 };
    if spectral_k == 0 || spectral_k > connected.len() {
        return Err(Error::Config(format!(
            "{} isolated tags leave {} connected tags for {spectral_k} clusters",
            isolated.len(),
            connected.len()
        )));
    }

    let m = connected.len();
    let scale: Vec<f64> = connected.iter().map(|&i| degree[i].sqrt().recip()).collect();
    let normalized = DMatrix::from_fn(m, m, |a, b| {
        let (i, j) = (connected[a], connected[b]);
        let sym = 0.5 * (affinity[i * n + j] + affinity[j * n + i]);
        scale[a] * sym * scale[b]
    });
    let embedding = leading_eigenvectors(normalized, spectral_k)?;

    let inner = kmeans(&embedding, spectral_k, spectral_k, &options.kmeans)?.labels;
    let mut labels = vec![spectral_k; n];
    for (a, &i) in connected.iter().enumerate() {
        labels[i] = inner[a];
    }
    Ok(relabel_by_first_appearance(&labels))
}

/// Row-normalized `m x k` embedding from the eigenvectors of the `k` largest
/// eigenvalues of the normalized affinity, i.e. the `k` smallest of
/// `I - D^{-1/2} W D^{-1/2}`.
fn leading_eigenvectors(normalized: DMatrix<f64>, k: usize) -> Result<Vec<f64>> {
    let m = normalized.nrows();
    let eigen = SymmetricEigen::try_new(normalized, EIGEN_TOLERANCE, 0)
        .ok_or_else(|| Error::InvalidInput("eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut rows = vec![0.0; m * k];
    for (col, &e) in order.iter().take(k).enumerate() {
        for r in 0..m {
            rows[r * k + col] = eigen.eigenvectors[(r, e)];
        }
    }
    for row in rows.chunks_exact_mut(k) {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(rows)
}
