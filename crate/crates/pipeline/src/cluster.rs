//! Tag vocabulary, NPMI similarity, spectral clusters and per-user cluster weights.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use pixmood_core::tagcluster::{build_vocab, cluster_features, npmi_matrix, spectral_cluster, SpectralOptions, TagBag};

use crate::config::{stage_seed, RunConfig};
use crate::error::{CoreContext, Result};
use crate::manifest::{Dataset, ImageKind};
use crate::table::{self, write_csv, write_json};
use crate::tags::TagCache;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFile {
    pub k: usize,
    pub seed: u64,
    pub min_count: usize,
    pub n_bags: usize,
    pub vocab: Vec<String>,
    pub assignment: Vec<usize>,
    pub members: Vec<Vec<String>>,
}

pub fn cluster_column(c: usize) -> String {
    format!("cluster_{c}")
}

pub fn run_cluster(cfg: &RunConfig, dataset: &Dataset, out_dir: &Path) -> Result<ClusterFile> {
    let cache_path = out_dir.join(table::TAG_CACHE);
    let cache = TagCache::open(table::require(&cache_path)?)?;
    let posted: Vec<_> = dataset
        .included_images()
        .into_iter()
        .filter(|i| i.kind == ImageKind::Posted)
        .collect();
    let bags = cache.bags(posted.iter().map(|i| i.image_id.as_str()))?;
    let untagged = posted.len() - bags.len();
    if untagged > 0 {
        log::warn!("{untagged} posted images have no tags and are left out of clustering");
    }
    let vocab = build_vocab(&bags, cfg.tag_min_count).context(|| "tag vocabulary".into())?;
    let k = if cfg.clusters > vocab.len() {
        log::warn!(
            "{} clusters requested but only {} tags pass the frequency floor; using {}",
            cfg.clusters,
            vocab.len(),
            vocab.len()
        );
        vocab.len()
    } else {
        cfg.clusters
    };
    let seed = stage_seed(cfg.seed, "cluster");
    let sim = npmi_matrix(&bags, &vocab).context(|| "tag similarity".into())?;
    let model = spectral_cluster(&sim, k, &SpectralOptions::with_seed(seed)).context(|| "spectral clustering".into())?;

    let owner: BTreeMap<&str, &str> = posted.iter().map(|i| (i.image_id.as_str(), i.user_id.as_str())).collect();
    let mut per_user: BTreeMap<&str, Vec<TagBag>> =
        dataset.included_users().map(|u| (u.user_id.as_str(), Vec::new())).collect();
    for bag in &bags {
        let user = owner[bag.image_id.as_str()];
        per_user.get_mut(user).expect("included user").push(bag.clone());
    }
    let weights = cluster_features(per_user.iter().map(|(u, b)| (*u, b.as_slice())), &model);

    let mut header = vec!["user_id".to_string()];
    header.extend((0..model.k).map(cluster_column));
    write_csv(
        &out_dir.join(table::CLUSTER_FEATURES),
        &header,
        weights.iter().map(|w| {
            let mut row = vec![w.user_id.clone()];
            row.extend(w.weights.iter().map(|x| x.to_string()));
            row
        }),
    )?;

    let file = ClusterFile {
        k: model.k,
        seed,
        min_count: cfg.tag_min_count,
        n_bags: bags.len(),
        members: model
            .members()
            .into_iter()
            .map(|m| m.into_iter().map(String::from).collect())
            .collect(),
        vocab: model.vocab,
        assignment: model.assignment,
    };
    write_json(&out_dir.join(table::TAG_CLUSTERS), &file)?;
    Ok(file)
}
