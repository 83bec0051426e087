//! Image tagging: a JSON-lines cache, a fixture replay source and a live HTTP
//! client with rate limiting and retries.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use pixmood_core::tagcluster::{TagBag, MAX_TAGS_PER_IMAGE};

use crate::config::TaggingConfig;
use crate::error::{CoreContext, PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagSource {
    Live,
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagEntry {
    pub image_id: String,
    pub tags: Vec<String>,
    pub retrieved_at: String,
    pub source: TagSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTag {
    pub tag: String,
    pub confidence: f64,
}

/// Distinct tags sorted by confidence, highest first, cut to the top ten.
/// Ties keep their input order.
pub fn top_tags(mut tags: Vec<ScoredTag>) -> Vec<String> {
    tags.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut out: Vec<String> = Vec::new();
    for t in tags {
        let tag = t.tag.trim().to_string();
        if !tag.is_empty() && !out.contains(&tag) {
            out.push(tag);
        }
        if out.len() == MAX_TAGS_PER_IMAGE {
            break;
        }
    }
    out
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// At most one entry per image, persisted as sorted JSON lines.
#[derive(Debug, Clone)]
pub struct TagCache {
    path: PathBuf,
    entries: BTreeMap<String, TagEntry>,
}

impl TagCache {
    /// Opens the cache at `path`; a missing file is an empty cache.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
            for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| PipelineError::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: TagEntry = serde_json::from_str(&line)
                    .map_err(|e| PipelineError::format(path, format!("line {}: {e}", i + 1)))?;
                if entries.insert(entry.image_id.clone(), entry).is_some() {
                    return Err(PipelineError::format(path, format!("line {}: duplicate image", i + 1)));
                }
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn get(&self, image_id: &str) -> Option<&TagEntry> {
        self.entries.get(image_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &TagEntry> {
        self.entries.values()
    }

    /// Stores `entry` unless that would replace a fixture entry with a live
    /// one without `force`. Returns whether it was stored.
    pub fn insert(&mut self, entry: TagEntry, force: bool) -> bool {
        if let Some(old) = self.entries.get(&entry.image_id) {
            if old.source == TagSource::Fixture && entry.source == TagSource::Live && !force {
                return false;
            }
        }
        self.entries.insert(entry.image_id.clone(), entry);
        true
    }

    pub fn save(&self) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        let tmp = self.path.with_extension("jsonl.tmp");
        {
            let file = std::fs::File::create(&tmp).map_err(|e| PipelineError::io(&tmp, e))?;
            let mut w = std::io::BufWriter::new(file);
            for entry in self.entries.values() {
                let line = serde_json::to_string(entry).expect("tag entries serialize");
                writeln!(w, "{line}").map_err(|e| PipelineError::io(&tmp, e))?;
            }
            w.flush().map_err(|e| PipelineError::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, &self.path).map_err(|e| PipelineError::io(&self.path, e))
    }

    /// Tag bags of the given images that have a cache entry with tags.
    pub fn bags<'a>(&self, image_ids: impl IntoIterator<Item = &'a str>) -> Result<Vec<TagBag>> {
        image_ids
            .into_iter()
            .filter_map(|id| self.entries.get(id))
            .filter(|e| !e.tags.is_empty())
            .map(|e| TagBag::new(e.image_id.clone(), e.tags.clone()).context(|| format!("tags of `{}`", e.image_id)))
            .collect()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureTag {
    Scored { tag: String, confidence: f64 },
    Plain(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureLine {
    image_id: String,
    tags: Vec<FixtureTag>,
}

/// Reads a replay file: one `{"image_id", "tags"}` object per line, where tags
/// are either strings (in rank order) or `{"tag", "confidence"}` objects.
pub fn load_fixture(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PipelineError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: FixtureLine = serde_json::from_str(&line)
            .map_err(|e| PipelineError::format(path, format!("line {}: {e}", i + 1)))?;
        let n = parsed.tags.len();
        let scored = parsed
            .tags
            .into_iter()
            .enumerate()
            .map(|(rank, t)| match t {
                FixtureTag::Scored { tag, confidence } => ScoredTag { tag, confidence },
                FixtureTag::Plain(tag) => ScoredTag {
                    tag,
                    confidence: (n - rank) as f64,
                },
            })
            .collect();
        if out.insert(parsed.image_id.clone(), top_tags(scored)).is_some() {
            return Err(PipelineError::format(path, format!("line {}: duplicate image", i + 1)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FetchStats {
    pub requested: usize,
    pub already_cached: usize,
    pub stored: usize,
    pub live_calls: usize,
    /// Images left without tags after all attempts.
    pub missing: Vec<String>,
}

/// Fills the cache from a replay map. Never touches the network. Any image
/// absent from both the cache and the fixture is a hard error.
pub fn fetch_from_fixture(
    cache: &mut TagCache,
    image_ids: &[&str],
    fixture: &BTreeMap<String, Vec<String>>,
    force: bool,
) -> Result<FetchStats> {
    let mut stats = FetchStats {
        requested: image_ids.len(),
        ..Default::default()
    };
    let todo: Vec<&str> = image_ids
        .iter()
        .copied()
        .filter(|id| force || cache.get(id).is_none())
        .collect();
    stats.already_cached = image_ids.len() - todo.len();
    let absent: Vec<&str> = todo.iter().copied().filter(|id| !fixture.contains_key(*id)).collect();
    if !absent.is_empty() {
        return Err(PipelineError::Tagging(format!(
            "fixture has no entry for {} image(s): {}",
            absent.len(),
            absent.join(", ")
        )));
    }
    let stamp = now();
    for id in todo {
        let stored = cache.insert(
            TagEntry {
                image_id: id.to_string(),
                tags: fixture[id].clone(),
                retrieved_at: stamp.clone(),
                source: TagSource::Fixture,
            },
            force,
        );
        stats.stored += usize::from(stored);
    }
    Ok(stats)
}

/// Copies every fixture line into the cache.
pub fn import_fixture(cache: &mut TagCache, fixture: &BTreeMap<String, Vec<String>>, force: bool) -> FetchStats {
    let ids: Vec<&str> = fixture.keys().map(String::as_str).collect();
    fetch_from_fixture(cache, &ids, fixture, force).expect("every id comes from the fixture")
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    /// Worth retrying: timeouts, connection failures, 429 and 5xx.
    Transient(String),
    Permanent(String),
}

/// Something that turns image bytes into scored tags.
pub trait TagTransport {
    fn tag(&mut self, image_id: &str, bytes: &[u8]) -> std::result::Result<Vec<ScoredTag>, TransportError>;
}

pub trait Sleeper {
    fn sleep(&mut self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&mut self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Spaces requests at least `1 / rate` seconds apart.
pub struct RateLimiter {
    interval: Duration,
    last: Option<Instant>,
}

impl RateLimiter {
    pub fn new(max_per_second: f64) -> Self {
        Self {
            interval: Duration::from_secs_f64(1.0 / max_per_second),
            last: None,
        }
    }

    pub fn wait(&mut self, sleeper: &mut dyn Sleeper) {
        if let Some(last) = self.last {
            let since = last.elapsed();
            if since < self.interval {
                sleeper.sleep(self.interval - since);
            }
        }
        self.last = Some(Instant::now());
    }
}

/// Tags images through `transport`, skipping cached ones unless `force`.
/// Transient failures are retried with doubling backoff; images that still
/// fail are reported as missing and the run continues.
pub fn fetch_live(
    cache: &mut TagCache,
    images: &[(&str, &Path)],
    transport: &mut dyn TagTransport,
    sleeper: &mut dyn Sleeper,
    cfg: &TaggingConfig,
    force: bool,
) -> Result<FetchStats> {
    let mut stats = FetchStats {
        requested: images.len(),
        ..Default::default()
    };
    let mut limiter = RateLimiter::new(cfg.max_requests_per_second);
    for &(id, path) in images {
        if !force && cache.get(id).is_some() {
            stats.already_cached += 1;
            continue;
        }
        let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        let mut result = None;
        for attempt in 1..=cfg.attempts {
            limiter.wait(sleeper);
            stats.live_calls += 1;
            log::info!("tagging `{id}`: attempt {attempt}/{}", cfg.attempts);
            match transport.tag(id, &bytes) {
                Ok(tags) => {
                    result = Some(tags);
                    break;
                }
                Err(TransportError::Transient(msg)) => {
                    log::warn!("tagging `{id}`: attempt {attempt} failed: {msg}");
                    if attempt < cfg.attempts {
                        sleeper.sleep(Duration::from_millis(cfg.backoff_ms << (attempt - 1)));
                    }
                }
                Err(TransportError::Permanent(msg)) => {
                    log::warn!("tagging `{id}`: giving up: {msg}");
                    break;
                }
            }
        }
        let tags = result.map(top_tags).unwrap_or_default();
        if tags.is_empty() {
            log::warn!("image `{id}` marked tag-missing");
            stats.missing.push(id.to_string());
            continue;
        }
        let stored = cache.insert(
            TagEntry {
                image_id: id.to_string(),
                tags,
                retrieved_at: now(),
                source: TagSource::Live,
            },
            force,
        );
        stats.stored += usize::from(stored);
    }
    Ok(stats)
}

/// Client for an Imagga-style `/v3/tags` endpoint using basic auth.
pub struct HttpTransport {
    agent: ureq::Agent,
    endpoint: String,
    authorization: String,
}

impl HttpTransport {
    /// Reads the key and secret from the environment variables named in `cfg`.
    pub fn from_env(cfg: &TaggingConfig) -> Result<Self> {
        let read = |name: &str| {
            std::env::var(name).map_err(|_| PipelineError::Config(format!("environment variable {name} is not set")))
        };
        let (key, secret) = (read(&cfg.key_env)?, read(&cfg.secret_env)?);
        Ok(Self::new(&cfg.endpoint, &key, &secret, Duration::from_secs(cfg.timeout_secs)))
    }

    pub fn new(endpoint: &str, key: &str, secret: &str, timeout: Duration) -> Self {
        use base64::Engine;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let token = base64::engine::general_purpose::STANDARD.encode(format!("{key}:{secret}"));
        Self {
            agent,
            endpoint: endpoint.to_string(),
            authorization: format!("Basic {token}"),
        }
    }
}

#[derive(Deserialize)]
struct TagsResponse {
    result: TagsResult,
}

#[derive(Deserialize)]
struct TagsResult {
    tags: Vec<ResponseTag>,
}

#[derive(Deserialize)]
struct ResponseTag {
    confidence: f64,
    tag: BTreeMap<String, String>,
}

/// Parses a tagging response body, keeping English labels.
pub fn parse_response(body: &str) -> std::result::Result<Vec<ScoredTag>, TransportError> {
    let parsed: TagsResponse =
        serde_json::from_str(body).map_err(|e| TransportError::Permanent(format!("bad response: {e}")))?;
    Ok(parsed
        .result
        .tags
        .into_iter()
        .filter_map(|t| {
            t.tag.get("en").map(|tag| ScoredTag {
                tag: tag.clone(),
                confidence: t.confidence,
            })
        })
        .collect())
}

impl TagTransport for HttpTransport {
    fn tag(&mut self, _image_id: &str, bytes: &[u8]) -> std::result::Result<Vec<ScoredTag>, TransportError> {
        use base64::Engine;
        let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
        let mut response = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &self.authorization)
            .send_form([("image_base64", encoded.as_str())])
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        match status {
            200..=299 => parse_response(&body),
            429 | 500..=599 => Err(TransportError::Transient(format!("HTTP {status}"))),
            _ => Err(TransportError::Permanent(format!("HTTP {status}: {body}"))),
        }
    }
}
