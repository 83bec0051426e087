use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TagBag;
use crate::error::{Error, Result};

/// Symmetric tag-by-tag similarity, row-major, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub vocab: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Wraps a dense row-major matrix after checking shape, range and symmetry.
    pub fn from_dense(vocab: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = vocab.len();
        if values.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "similarity matrix has {} entries, expected {}",
                values.len(),
                n * n
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("similarity outside [0, 1]".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if (values[i * n + j] - values[j * n + i]).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "similarity not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { vocab, values })
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Clamped NPMI between every pair of vocabulary tags, with probabilities
/// estimated as document frequencies over bags.
pub fn npmi_matrix(bags: &[TagBag], vocab: &[String]) -> Result<SimilarityMatrix> {
    if bags.is_empty() {
        return Err(Error::InvalidInput("no tag bags".into()));
    }
    if vocab.is_empty() {
        return Err(Error::InvalidInput("empty vocabulary".into()));
    }
    let n = vocab.len();
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

    let mut single = vec![0u64; n];
    let mut joint = vec![0u64; n * n];
    let mut present = Vec::with_capacity(super::MAX_TAGS_PER_IMAGE);
    for bag in bags {
        present.clear();
        present.extend(bag.tags().iter().filter_map(|t| index.get(t.as_str()).copied()));
        for (a, &i) in present.iter().enumerate() {
            single[i] += 1;
            for &j in &present[a + 1..] {
                joint[i * n + j] += 1;
                joint[j * n + i] += 1;
            }
        }
    }

    let total = bags.len() as f64;
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let single = &single;
            let joint = &joint;
            (0..n).map(move |j| {
                if i == j {
                    1.0
                } else {
                    pair_npmi(joint[i * n + j], single[i], single[j], total).max(0.0)
                }
            })
        })
        .collect();

    Ok(SimilarityMatrix {
        vocab: vocab.to_vec(),
        values,
    })
}

fn pair_npmi(joint: u64, x: u64, y: u64, total: f64) -> f64 {
    if joint == 0 {
        return 0.0;
    }
    let joint_f = joint as f64;
    if joint_f == total {
        // Both tags appear in every bag.
        return 1.0;
    }
    let pmi = (joint_f * total / (x as f64 * y as f64)).ln();
    let h = (total / joint_f).ln();
    let npmi = pmi / h;
    debug_assert!(
        (-1.0 - 1e-9..=1.0 + 1e-9).contains(&npmi),
        "npmi {npmi} out of range"
    );
    npmi.min(1.0)
}
