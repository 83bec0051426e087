//! Manifest parsing and dataset validation.
//!
//! A manifest is a small JSON file naming a users file and an images file
//! (both JSON lines) plus optional precomputed feature blocks (CSV keyed by
//! `image_id`). Paths are relative to the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Names the pipeline uses for its own feature sets.
pub const RESERVED_SET_NAMES: [&str; 5] = ["colors", "meta", "profile", "clusters", "combination"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    dataset: String,
    users: PathBuf,
    images: PathBuf,
    #[serde(default)]
    precomputed: Vec<BlockRef>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockRef {
    name: String,
    path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserRecord {
    pub user_id: String,
    pub age: f64,
    /// 1 for female, 0 for male.
    pub gender: f64,
    pub depression: f64,
    pub anxiety: f64,
    /// All posts by the user, with or without images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_posts: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageKind {
    Posted,
    Profile,
}

impl ImageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ImageKind::Posted => "posted",
            ImageKind::Profile => "profile",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImage {
    image_id: String,
    user_id: String,
    kind: String,
    #[serde(default)]
    path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub user_id: String,
    pub kind: ImageKind,
    /// Resolved raster path; `None` for images known only by precomputed rows.
    pub path: Option<PathBuf>,
}

/// Opaque named float columns keyed by image.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedBlock {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub user_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    /// Sorted by user id.
    pub users: Vec<UserRecord>,
    /// Sorted by image id.
    pub images: Vec<ImageRecord>,
    pub blocks: Vec<PrecomputedBlock>,
    pub posted_counts: BTreeMap<String, usize>,
    pub exclusions: Vec<Exclusion>,
}

impl Dataset {
    pub fn is_excluded(&self, user_id: &str) -> bool {
        self.exclusions.iter().any(|e| e.user_id == user_id)
    }

    pub fn included_users(&self) -> impl Iterator<Item = &UserRecord> {
        let excluded: BTreeSet<&str> = self.exclusions.iter().map(|e| e.user_id.as_str()).collect();
        self.users.iter().filter(move |u| !excluded.contains(u.user_id.as_str()))
    }

    /// Images of included users, in image id order.
    pub fn included_images(&self) -> Vec<&ImageRecord> {
        let excluded: BTreeSet<&str> = self.exclusions.iter().map(|e| e.user_id.as_str()).collect();
        self.images.iter().filter(|i| !excluded.contains(i.user_id.as_str())).collect()
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path, problems: &mut Vec<String>) -> Vec<T> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) => {
            problems.push(format!("{}: {e}", path.display()));
            return Vec::new();
        }
    };
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                problems.push(format!("{}:{}: {e}", path.display(), i + 1));
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            Err(e) => problems.push(format!("{}:{}: {e}", path.display(), i + 1)),
        }
    }
    out
}

fn read_block(name: &str, path: &Path, problems: &mut Vec<String>) -> Option<PrecomputedBlock> {
    let mut reader = match csv::Reader::from_path(path) {
        Ok(r) => r,
        Err(e) => {
            problems.push(format!("block `{name}`: {}: {e}", path.display()));
            return None;
        }
    };
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            problems.push(format!("block `{name}`: {e}"));
            return None;
        }
    };
    if header.get(0) != Some("image_id") || header.len() < 2 {
        problems.push(format!(
            "block `{name}`: header must be `image_id` followed by at least one column"
        ));
        return None;
    }
    let columns: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut rows = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("block `{name}` line {line}: {e}"));
                continue;
            }
        };
        let id = record.get(0).unwrap_or_default().to_string();
        let values: std::result::Result<Vec<f64>, _> =
            record.iter().skip(1).map(|v| v.trim().parse::<f64>()).collect();
        match values {
            Ok(v) if v.iter().all(|x| x.is_finite()) => {
                if rows.insert(id.clone(), v).is_some() {
                    problems.push(format!("block `{name}`: duplicate row for image `{id}`"));
                }
            }
            _ => problems.push(format!("block `{name}` line {line}: non-numeric or non-finite value")),
        }
    }
    Some(PrecomputedBlock {
        name: name.to_string(),
        columns,
        rows,
    })
}

fn valid_set_name(name: &str) -> bool {
    !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        && !RESERVED_SET_NAMES.contains(&name)
}

/// Parses and validates a manifest. Every problem found is reported at once.
pub fn ingest(manifest_path: &Path, min_images: usize) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| PipelineError::Validation(vec![format!("{}: {e}", manifest_path.display())]))?;
    let manifest: ManifestFile = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Validation(vec![format!("{}: {e}", manifest_path.display())]))?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut problems = Vec::new();

    let mut users: Vec<UserRecord> = read_jsonl(&root.join(&manifest.users), &mut problems);
    let mut user_ids = BTreeSet::new();
    for u in &users {
        if !user_ids.insert(u.user_id.clone()) {
            problems.push(format!("duplicate user_id `{}`", u.user_id));
        }
        if ![u.age, u.gender, u.depression, u.anxiety].iter().all(|v| v.is_finite()) {
            problems.push(format!("user `{}` has a non-finite value", u.user_id));
        }
        if u.gender != 0.0 && u.gender != 1.0 {
            problems.push(format!("user `{}` has gender {}, expected 0 or 1", u.user_id, u.gender));
        }
    }
    users.sort_by(|a, b| a.user_id.cmp(&b.user_id));

    let mut blocks = Vec::new();
    let mut block_names = BTreeSet::new();
    for b in &manifest.precomputed {
        if !valid_set_name(&b.name) {
            problems.push(format!(
                "block name `{}` must be alphanumeric and not one of {RESERVED_SET_NAMES:?}",
                b.name
            ));
        }
        if !block_names.insert(b.name.clone()) {
            problems.push(format!("duplicate block name `{}`", b.name));
        }
        if let Some(block) = read_block(&b.name, &root.join(&b.path), &mut problems) {
            blocks.push(block);
        }
    }

    let raw: Vec<RawImage> = read_jsonl(&root.join(&manifest.images), &mut problems);
    let mut images = Vec::with_capacity(raw.len());
    let mut image_ids = BTreeSet::new();
    let mut profile_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &raw {
        if !image_ids.insert(r.image_id.clone()) {
            problems.push(format!("duplicate image_id `{}`", r.image_id));
        }
        if !user_ids.contains(&r.user_id) {
            problems.push(format!("image `{}` references unknown user `{}`", r.image_id, r.user_id));
        }
        let kind = match r.kind.as_str() {
            "posted" => ImageKind::Posted,
            "profile" => {
                *profile_counts.entry(&r.user_id).or_default() += 1;
                ImageKind::Profile
            }
            other => {
                problems.push(format!(
                    "image `{}` has kind `{other}`, expected `posted` or `profile`",
                    r.image_id
                ));
                continue;
            }
        };
        let path = r.path.as_ref().map(|p| root.join(p));
        match &path {
            Some(p) => {
                if let Err(e) = std::fs::File::open(p) {
                    problems.push(format!("image `{}`: cannot read {}: {e}", r.image_id, p.display()));
                }
            }
            None => {
                if !blocks.iter().any(|b| b.rows.contains_key(&r.image_id)) {
                    problems.push(format!(
                        "image `{}` has neither a path nor precomputed features",
                        r.image_id
                    ));
                }
            }
        }
        images.push(ImageRecord {
            image_id: r.image_id.clone(),
            user_id: r.user_id.clone(),
            kind,
            path,
        });
    }
    for (user, n) in profile_counts {
        if n > 1 {
            problems.push(format!("user `{user}` has {n} profile images, expected at most one"));
        }
    }
    for b in &blocks {
        for id in b.rows.keys() {
            if !image_ids.contains(id) {
                problems.push(format!("block `{}` has a row for unknown image `{id}`", b.name));
            }
        }
    }
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let mut posted_counts: BTreeMap<String, usize> = users.iter().map(|u| (u.user_id.clone(), 0)).collect();
    for img in images.iter().filter(|i| i.kind == ImageKind::Posted) {
        if let Some(c) = posted_counts.get_mut(&img.user_id) {
            *c += 1;
        }
    }
    for u in &users {
        if let Some(posts) = u.n_posts {
            let posted = posted_counts[&u.user_id];
            if posts < posted {
                problems.push(format!(
                    "user `{}` has n_posts {posts} but {posted} posted images",
                    u.user_id
                ));
            }
        }
    }
    if !problems.is_empty() {
        return Err(PipelineError::Validation(problems));
    }

    let exclusions = posted_counts
        .iter()
        .filter(|(_, &n)| n < min_images)
        .map(|(u, &n)| Exclusion {
            user_id: u.clone(),
            reason: format!("posted {n} images, fewer than min_images={min_images}"),
        })
        .collect();

    Ok(Dataset {
        name: manifest.dataset,
        users,
        images,
        blocks,
        posted_counts,
        exclusions,
    })
}
