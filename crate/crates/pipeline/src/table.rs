//! Output file names and small CSV helpers shared by the stages.

use std::path::{Path, PathBuf};

use crate::error::{PipelineError, Result};

pub const EXCLUSIONS: &str = "exclusions.csv";
pub const IMAGE_FEATURES: &str = "image_features.csv";
pub const USER_FEATURES: &str = "user_features.csv";
pub const FEATURE_SETS: &str = "feature_sets.json";
pub const TAG_CACHE: &str = "tag_cache.jsonl";
pub const TAG_MISSING: &str = "tags_missing.csv";
pub const TAG_CLUSTERS: &str = "tag_clusters.json";
pub const CLUSTER_FEATURES: &str = "cluster_features.csv";
pub const CORRELATIONS: &str = "correlations.csv";
pub const PREDICTION_FOLDS: &str = "predictions_folds.csv";
pub const PREDICTION_SUMMARY: &str = "predictions_summary.csv";
pub const FOLDS: &str = "folds.csv";
pub const MODELS_DIR: &str = "models";
pub const REPORT: &str = "report.md";

/// Empty for absent values, shortest round-trip form otherwise.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::format(path, e))?;
    w.write_record(header).map_err(|e| PipelineError::format(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| PipelineError::format(path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(require(path)?).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::format(path, e))
}

/// Fails with a pointer to the missing stage output.
pub fn require(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingStage(path.to_path_buf()))
    }
}

/// A numeric table keyed by its first column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    /// `rows[i][j]`: row `i`, column `j`.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(require(path)?).map_err(|e| PipelineError::format(path, e))?;
        let header = reader.headers().map_err(|e| PipelineError::format(path, e))?.clone();
        let columns: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let (mut ids, mut rows) = (Vec::new(), Vec::new());
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| PipelineError::format(path, e))?;
            ids.push(record.get(0).unwrap_or_default().to_string());
            let row = record
                .iter()
                .skip(1)
                .map(|v| {
                    if v.is_empty() {
                        Ok(None)
                    } else {
                        v.parse::<f64>()
                            .map(Some)
                            .map_err(|_| PipelineError::format(path, format!("row {}: bad number `{v}`", i + 2)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { columns, ids, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn out_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join(name)
}
