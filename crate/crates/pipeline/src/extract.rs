//! Per-image color features and per-user pooled feature rows.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pixmood_core::imagefeat::{
    aggregate_user, extract_color_features, AggregateOptions, ColorFeatures, ImageObservation, RgbImage,
    UserFeatureVector,
};

use crate::config::RunConfig;
use crate::error::{CoreContext, PipelineError, Result};
use crate::manifest::{Dataset, ImageKind};
use crate::table::{self, fmt_opt, write_csv, write_json};
use crate::tags::TagCache;

/// Column names of each feature set in `user_features.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSets {
    pub sets: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractSummary {
    pub images: usize,
    pub users: usize,
    pub excluded: usize,
}

pub fn load_image(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| PipelineError::format(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::from_rgb8(w as usize, h as usize, img.as_raw()).context(|| path.display().to_string())
}

pub fn write_exclusions(dataset: &Dataset, out_dir: &Path) -> Result<()> {
    write_csv(
        &out_dir.join(table::EXCLUSIONS),
        &["user_id".into(), "reason".into()],
        dataset.exclusions.iter().map(|e| vec![e.user_id.clone(), e.reason.clone()]),
    )
}

const META: [&str; 2] = ["pct_image_posts", "pct_posts_with_people"];

fn prefixed(prefix: &str, names: &[String]) -> Vec<String> {
    names.iter().map(|n| format!("{prefix}_{n}")).collect()
}

pub fn run_extract(cfg: &RunConfig, dataset: &Dataset, out_dir: &Path) -> Result<ExtractSummary> {
    write_exclusions(dataset, out_dir)?;
    let images = dataset.included_images();

    let features: Vec<(usize, ColorFeatures)> = images
        .par_iter()
        .enumerate()
        .filter_map(|(i, img)| img.path.as_ref().map(|p| (i, p)))
        .map(|(i, path)| {
            let raster = load_image(path).map_err(|e| match e {
                PipelineError::Core { context, source } => PipelineError::Core {
                    context: format!("image `{}` ({context})", images[i].image_id),
                    source,
                },
                other => other,
            })?;
            Ok((i, extract_color_features(&raster)))
        })
        .collect::<Result<Vec<_>>>()?;
    let by_image: BTreeMap<&str, &ColorFeatures> =
        features.iter().map(|(i, f)| (images[*i].image_id.as_str(), f)).collect();

    let color_names = ColorFeatures::column_names();
    let mut header = vec!["image_id".to_string(), "user_id".into(), "kind".into()];
    header.extend(color_names.iter().cloned());
    write_csv(
        &out_dir.join(table::IMAGE_FEATURES),
        &header,
        features.iter().map(|(i, f)| {
            let img = images[*i];
            let mut row = vec![img.image_id.clone(), img.user_id.clone(), img.kind.as_str().to_string()];
            row.extend(f.values().into_iter().map(fmt_opt));
            row
        }),
    )?;

    let cache_path = out_dir.join(table::TAG_CACHE);
    let cache = if cache_path.exists() {
        Some(TagCache::open(&cache_path)?)
    } else {
        log::info!("no tag cache at {}; people share left empty", cache_path.display());
        None
    };
    let person_tags = cfg.person_tag_set();

    let colors: Vec<String> = UserFeatureVector::column_names()
        .into_iter()
        .filter(|c| !META.contains(&c.as_str()))
        .collect();
    let profile = prefixed("profile", &color_names);
    let mut sets = vec![
        ("colors".to_string(), colors.clone()),
        ("meta".to_string(), META.iter().map(|s| s.to_string()).collect()),
    ];
    let has_profile = images.iter().any(|i| i.kind == ImageKind::Profile && i.path.is_some());
    if has_profile {
        sets.push(("profile".into(), profile.clone()));
    }
    for b in &dataset.blocks {
        sets.push((b.name.clone(), prefixed(&b.name, &b.columns)));
    }

    let mut user_images: BTreeMap<&str, Vec<&crate::manifest::ImageRecord>> = BTreeMap::new();
    for img in &images {
        user_images.entry(img.user_id.as_str()).or_default().push(img);
    }
    let options = AggregateOptions {
        min_images: cfg.min_images,
        person_tags: person_tags.clone(),
        n_posts: None,
    };

    let mut rows = Vec::new();
    for user in dataset.included_users() {
        let imgs = user_images.get(user.user_id.as_str()).cloned().unwrap_or_default();
        let posted: Vec<_> = imgs.iter().filter(|i| i.kind == ImageKind::Posted).collect();
        let obs: Vec<ImageObservation> = posted
            .iter()
            .filter_map(|i| by_image.get(i.image_id.as_str()))
            .map(|f| ImageObservation { features: f, tags: None })
            .collect();
        let mut values: BTreeMap<&str, Option<f64>> = BTreeMap::new();
        if !obs.is_empty() {
            let v = aggregate_user(&user.user_id, &obs, &options).context(|| format!("user `{}`", user.user_id))?;
            for (name, x) in UserFeatureVector::column_names().iter().zip(v.values()) {
                if let Some(slot) = colors.iter().find(|c| *c == name) {
                    values.insert(slot.as_str(), x);
                }
            }
        }

        let pct_image_posts = user.n_posts.filter(|&p| p > 0).map(|p| posted.len() as f64 / p as f64);
        let pct_people = cache.as_ref().and_then(|c| {
            let tagged: Vec<_> = posted
                .iter()
                .filter_map(|i| c.get(&i.image_id))
                .filter(|e| !e.tags.is_empty())
                .collect();
            (!tagged.is_empty()).then(|| {
                let hits = tagged.iter().filter(|e| e.tags.iter().any(|t| person_tags.contains(t))).count();
                hits as f64 / tagged.len() as f64
            })
        });

        let mut row = vec![user.user_id.clone(), posted.len().to_string()];
        row.extend(colors.iter().map(|c| fmt_opt(values.get(c.as_str()).copied().flatten())));
        row.push(fmt_opt(pct_image_posts));
        row.push(fmt_opt(pct_people));
        if has_profile {
            let prof = imgs
                .iter()
                .find(|i| i.kind == ImageKind::Profile)
                .and_then(|i| by_image.get(i.image_id.as_str()));
            match prof {
                Some(f) => row.extend(f.values().into_iter().map(fmt_opt)),
                None => row.extend(std::iter::repeat_n(String::new(), profile.len())),
            }
        }
        for b in &dataset.blocks {
            let present: Vec<&Vec<f64>> = imgs.iter().filter_map(|i| b.rows.get(&i.image_id)).collect();
            if present.is_empty() {
                row.extend(std::iter::repeat_n(String::new(), b.columns.len()));
            } else {
                for j in 0..b.columns.len() {
                    let mean = present.iter().map(|r| r[j]).sum::<f64>() / present.len() as f64;
                    row.push(mean.to_string());
                }
            }
        }
        rows.push(row);
    }

    let mut header = vec!["user_id".to_string(), "n_images".into()];
    for (_, cols) in &sets {
        header.extend(cols.iter().cloned());
    }
    let n_users = rows.len();
    write_csv(&out_dir.join(table::USER_FEATURES), &header, rows)?;
    write_json(&out_dir.join(table::FEATURE_SETS), &FeatureSets { sets })?;

    Ok(ExtractSummary {
        images: features.len(),
        users: n_users,
        excluded: dataset.exclusions.len(),
    })
}
