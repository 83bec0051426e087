//! Content-tag clustering: vocabulary filtering, NPMI similarity, spectral
//! clustering and per-user cluster frequency vectors.

mod kmeans;
mod npmi;
mod spectral;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kmeans::{kmeans, KMeansOptions, KMeansResult};
pub use npmi::{npmi_matrix, SimilarityMatrix};
pub use spectral::{spectral_cluster, spectral_labels, SpectralOptions};

pub const MAX_TAGS_PER_IMAGE: usize = 10;
pub const DEFAULT_MIN_TAG_COUNT: usize = 200;
pub const DEFAULT_CLUSTERS: usize = 400;

/// The distinct top tags predicted for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagBag {
    pub image_id: String,
    tags: Vec<String>,
}

impl TagBag {
    pub fn new(image_id: impl Into<String>, tags: Vec<String>) -> Result<Self> {
        let image_id = image_id.into();
        if tags.is_empty() || tags.len() > MAX_TAGS_PER_IMAGE {
            return Err(Error::InvalidInput(format!(
                "image `{image_id}` has {} tags, expected 1..={MAX_TAGS_PER_IMAGE}",
                tags.len()
            )));
        }
        let distinct: BTreeSet<&String> = tags.iter().collect();
        if distinct.len() != tags.len() {
            return Err(Error::InvalidInput(format!(
                "image `{image_id}` has duplicate tags"
            )));
        }
        Ok(Self { image_id, tags })
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

/// Tags occurring in at least `min_count` bags, sorted lexicographically.
pub fn build_vocab(bags: &[TagBag], min_count: usize) -> Result<Vec<String>> {
    if bags.is_empty() {
        return Err(Error::InvalidInput("no tag bags".into()));
    }
    if min_count == 0 {
        return Err(Error::Config("tag min_count must be at least 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for tag in bags.iter().flat_map(|b| &b.tags) {
        *counts.entry(tag).or_default() += 1;
    }
    let vocab: Vec<String> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(t, _)| t.to_string())
        .collect();
    if vocab.is_empty() {
        return Err(Error::Config(format!(
            "no tag occurs {min_count} or more times; lower the tag min_count"
        )));
    }
    Ok(vocab)
}

/// Hard assignment of every vocabulary tag to one of `k` clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagClusterModel {
    pub vocab: Vec<String>,
    pub assignment: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl TagClusterModel {
    pub fn new(vocab: Vec<String>, assignment: Vec<usize>, k: usize, seed: u64) -> Result<Self> {
        if vocab.len() != assignment.len() {
            return Err(Error::InvalidInput(format!(
                "{} tags but {} assignments",
                vocab.len(),
                assignment.len()
            )));
        }
        let mut sizes = vec![0usize; k];
        for &c in &assignment {
            if c >= k {
                return Err(Error::InvalidInput(format!("cluster id {c} out of range for k={k}")));
            }
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("cluster {empty} is empty")));
        }
        Ok(Self {
            vocab,
            assignment,
            k,
            seed,
        })
    }

    pub fn cluster_of(&self, tag: &str) -> Option<usize> {
        self.vocab
            .binary_search_by(|t| t.as_str().cmp(tag))
            .ok()
            .map(|i| self.assignment[i])
    }

    /// Members of each cluster in vocabulary order.
    pub fn members(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.k];
        for (tag, &c) in self.vocab.iter().zip(&self.assignment) {
            out[c].push(tag.as_str());
        }
        out
    }

    fn lookup(&self) -> HashMap<&str, usize> {
        self.vocab
            .iter()
            .map(String::as_str)
            .zip(self.assignment.iter().copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeatureVector {
    pub user_id: String,
    pub weights: Vec<f64>,
    /// True when none of the user's tags is in the vocabulary; weights are then all zero.
    pub no_vocab_tags: bool,
}

/// Normalized per-user cluster frequencies. A cluster counts at most once per image.
pub fn cluster_features<'a, I>(users: I, model: &TagClusterModel) -> Vec<ClusterFeatureVector>
where
    I: IntoIterator<Item = (&'a str, &'a [TagBag])>,
{
    let lookup = model.lookup();
    users
        .into_iter()
        .map(|(user_id, bags)| {
            let mut counts = vec![0usize; model.k];
            for bag in bags {
                let present: BTreeSet<usize> = bag
                    .tags
                    .iter()
                    .filter_map(|t| lookup.get(t.as_str()).copied())
                    .collect();
                present.into_iter().for_each(|c| counts[c] += 1);
            }
            let total: usize = counts.iter().sum();
            let weights = if total == 0 {
                vec![0.0; model.k]
            } else {
                counts.iter().map(|&c| c as f64 / total as f64).collect()
            };
            ClusterFeatureVector {
                user_id: user_id.to_string(),
                weights,
                no_vocab_tags: total == 0,
            }
        })
        .collect()
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len();
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let row_sum: f64 = rows.values().map(|&c| choose2(c)).sum();
    let col_sum: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = row_sum * col_sum / choose2(n);
    let max = (row_sum + col_sum) / 2.0;
    if max == expected {
        // Both labelings are trivial (all singletons or one block).
        return 1.0;
    }
    (index - expected) / (max - expected)
}
