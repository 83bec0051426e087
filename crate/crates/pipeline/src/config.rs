//! Run configuration, read from TOML.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TagMode {
    #[default]
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggingConfig {
    pub mode: TagMode,
    /// JSON-lines replay file used in fixture mode.
    pub fixture: Option<PathBuf>,
    pub endpoint: String,
    /// Ceiling on live requests per second.
    pub max_requests_per_second: f64,
    pub attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Names of the environment variables holding the credentials.
    pub key_env: String,
    pub secret_env: String,
}

impl Default for TaggingConfig {
    fn default() -> Self {
        Self {
            mode: TagMode::Fixture,
            fixture: None,
            endpoint: "https://api.imagga.com/v3/tags".into(),
            max_requests_per_second: 1.0,
            attempts: 3,
            backoff_ms: 500,
            timeout_secs: 30,
            key_env: "IMAGGA_API_KEY".into(),
            secret_env: "IMAGGA_API_SECRET".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub seed: u64,
    pub min_images: usize,
    pub clusters: usize,
    pub tag_min_count: usize,
    pub significance: f64,
    pub folds: usize,
    pub person_tags: Vec<String>,
    pub tagging: TaggingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.json"),
            seed: 0,
            min_images: pixmood_core::imagefeat::DEFAULT_MIN_IMAGES,
            clusters: pixmood_core::tagcluster::DEFAULT_CLUSTERS,
            tag_min_count: pixmood_core::tagcluster::DEFAULT_MIN_TAG_COUNT,
            significance: pixmood_core::stats::DEFAULT_SIGNIFICANCE,
            folds: pixmood_core::mtlearn::DEFAULT_FOLDS,
            person_tags: pixmood_core::imagefeat::default_person_tags().into_iter().collect(),
            tagging: TaggingConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file. Relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.manifest = base.join(&cfg.manifest);
        if let Some(f) = cfg.tagging.fixture.take() {
            cfg.tagging.fixture = Some(base.join(f));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("min_images", self.min_images),
            ("clusters", self.clusters),
            ("tag_min_count", self.tag_min_count),
        ] {
            if v < 1 {
                problems.push(format!("{name} must be at least 1"));
            }
        }
        if self.folds < 2 {
            problems.push("folds must be at least 2".into());
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            problems.push(format!("significance {} must lie in (0, 1)", self.significance));
        }
        let t = &self.tagging;
        if !(t.max_requests_per_second > 0.0 && t.max_requests_per_second.is_finite()) {
            problems.push("tagging.max_requests_per_second must be positive".into());
        }
        if t.attempts < 1 {
            problems.push("tagging.attempts must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PipelineError::Config(problems.join("; ")))
        }
    }

    pub fn person_tag_set(&self) -> BTreeSet<String> {
        self.person_tags.iter().cloned().collect()
    }
}

/// Independent seed for one named stage, derived from the run seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    // FNV-1a over the stage name, then one splitmix64 step.
    let h = stage
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    let mut z = seed.wrapping_add(h).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
