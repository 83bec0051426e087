//! Writes small on-disk projects: manifest, users, images, tag fixture, config.
#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};

use pixmood::manifest::{ingest, Dataset};
use pixmood::RunConfig;
use rand::Rng;

pub const SIDE: u32 = 4;

#[derive(Debug, Clone)]
pub struct Img {
    pub id: String,
    pub kind: &'static str,
    /// `SIDE * SIDE` pixels; `None` for images known only by block rows.
    pub rgb: Option<Vec<[u8; 3]>>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct User {
    pub id: String,
    pub age: f64,
    pub gender: f64,
    pub depression: f64,
    pub anxiety: f64,
    pub n_posts: Option<usize>,
    pub images: Vec<Img>,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub struct Project {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
    pub manifest: PathBuf,
}

impl Project {
    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn out(&self, name: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::create_dir_all(&p).unwrap();
        p
    }

    pub fn load(&self) -> (RunConfig, Dataset) {
        let cfg = RunConfig::load(&self.config).unwrap();
        let dataset = ingest(&cfg.manifest, cfg.min_images).unwrap();
        (cfg, dataset)
    }
}

pub fn solid(rgb: [u8; 3]) -> Vec<[u8; 3]> {
    vec![rgb; (SIDE * SIDE) as usize]
}

/// A chromatic color with a reliable hue, or a gray.
pub fn random_color(rng: &mut impl Rng, gray: bool) -> [u8; 3] {
    if gray {
        let g = rng.random_range(0..=255u8);
        [g, g, g]
    } else {
        // Value in [0.4, 0.9], saturation at least 0.5.
        let hi = rng.random_range(102..=229u8);
        let lo = rng.random_range(0..=hi / 2);
        let mid = rng.random_range(lo..=hi);
        let mut c = [hi, mid, lo];
        let rot = rng.random_range(0..3);
        c.rotate_left(rot);
        c
    }
}

fn write_png(path: &Path, pixels: &[[u8; 3]]) {
    let raw: Vec<u8> = pixels.iter().flatten().copied().collect();
    let img = image::RgbImage::from_raw(SIDE, SIDE, raw).expect("side x side pixels");
    img.save(path).unwrap();
}

/// Writes everything into a fresh temp dir. `extra` is spliced into the top
/// of the TOML config.
pub fn write_project(users: &[User], blocks: &[Block], extra: &str) -> Project {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("img")).unwrap();

    let mut users_f = std::fs::File::create(root.join("users.jsonl")).unwrap();
    let mut images_f = std::fs::File::create(root.join("images.jsonl")).unwrap();
    let mut fixture_f = std::fs::File::create(root.join("tags_fixture.jsonl")).unwrap();
    for u in users {
        let mut rec = serde_json::json!({
            "user_id": u.id, "age": u.age, "gender": u.gender,
            "depression": u.depression, "anxiety": u.anxiety,
        });
        if let Some(n) = u.n_posts {
            rec["n_posts"] = n.into();
        }
        writeln!(users_f, "{rec}").unwrap();
        for img in &u.images {
            let mut rec = serde_json::json!({"image_id": img.id, "user_id": u.id, "kind": img.kind});
            if let Some(px) = &img.rgb {
                let rel = format!("img/{}.png", img.id);
                write_png(&root.join(&rel), px);
                rec["path"] = rel.into();
            }
            writeln!(images_f, "{rec}").unwrap();
            if !img.tags.is_empty() {
                writeln!(fixture_f, "{}", serde_json::json!({"image_id": img.id, "tags": img.tags})).unwrap();
            }
        }
    }

    let mut block_refs = Vec::new();
    for b in blocks {
        let rel = format!("{}.csv", b.name);
        let mut w = csv::Writer::from_path(root.join(&rel)).unwrap();
        let mut header = vec!["image_id".to_string()];
        header.extend(b.columns.iter().cloned());
        w.write_record(&header).unwrap();
        for (id, vals) in &b.rows {
            let mut rec = vec![id.clone()];
            rec.extend(vals.iter().map(|v| v.to_string()));
            w.write_record(&rec).unwrap();
        }
        w.flush().unwrap();
        block_refs.push(serde_json::json!({"name": b.name, "path": rel}));
    }
    let manifest = serde_json::json!({
        "dataset": "synthetic",
        "users": "users.jsonl",
        "images": "images.jsonl",
        "precomputed": block_refs,
    });
    let manifest_path = root.join("manifest.json");
    std::fs::write(&manifest_path, manifest.to_string()).unwrap();

    let config = root.join("run.toml");
    std::fs::write(
        &config,
        format!("manifest = \"manifest.json\"\n{extra}\n[tagging]\nmode = \"fixture\"\nfixture = \"tags_fixture.jsonl\"\n"),
    )
    .unwrap();
    Project {
        dir,
        config,
        manifest: manifest_path,
    }
}

/// Users with random outcomes and `per_user` posted images each.
pub fn random_users(rng: &mut impl Rng, n: usize, per_user: usize) -> Vec<User> {
    (0..n)
        .map(|i| {
            let id = format!("u{i:03}");
            let images = (0..per_user)
                .map(|j| {
                    let gray = rng.random_bool(0.2);
                    Img {
                        id: format!("{id}_p{j:02}"),
                        kind: "posted",
                        rgb: Some(solid(random_color(rng, gray))),
                        tags: Vec::new(),
                    }
                })
                .collect();
            User {
                id,
                age: rng.random_range(18.0..65.0),
                gender: f64::from(u8::from(rng.random_bool(0.5))),
                depression: rng.random_range(0.0..5.0),
                anxiety: rng.random_range(0.0..5.0),
                n_posts: None,
                images,
            }
        })
        .collect()
}

/// Assigns each posted image three tags from one of `topics` disjoint topics.
pub fn tag_by_topic(rng: &mut impl Rng, users: &mut [User], topics: usize, per_topic: usize) {
    for u in users {
        for img in u.images.iter_mut().filter(|i| i.kind == "posted") {
            let t = rng.random_range(0..topics);
            let mut tags: Vec<String> = Vec::new();
            while tags.len() < 3 {
                let tag = format!("topic{t}_tag{}", rng.random_range(0..per_topic));
                if !tags.contains(&tag) {
                    tags.push(tag);
                }
            }
            img.tags = tags;
        }
    }
}
