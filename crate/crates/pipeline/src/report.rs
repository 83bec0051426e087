//! Human-readable summary of the correlation and prediction outputs.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{PipelineError, Result};
use crate::table;

#[derive(Debug, Deserialize)]
struct CorrelationRow {
    feature: String,
    outcome: String,
    n: usize,
    r: f64,
    p_adj: f64,
    significant: bool,
    controls: String,
}

#[derive(Debug, Deserialize)]
struct SummaryRow {
    feature_set: String,
    mode: String,
    task: String,
    mean_r: Option<f64>,
    mean_mse: Option<f64>,
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<Vec<T>>> {
    if !path.exists() {
        return Ok(None);
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| PipelineError::format(path, e))?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| PipelineError::format(path, e))?;
    Ok(Some(rows))
}

fn cell(r: Option<f64>, mse: Option<f64>) -> String {
    match (r, mse) {
        (Some(r), Some(m)) => format!("{r:.3} ({m:.3})"),
        (None, Some(m)) => format!("n/a ({m:.3})"),
        _ => "n/a".into(),
    }
}

/// Renders `report.md` from whatever stage outputs exist in `out_dir`.
pub fn run_report(dataset_name: &str, out_dir: &Path) -> Result<String> {
    let correlations: Option<Vec<CorrelationRow>> = read_rows(&out_dir.join(table::CORRELATIONS))?;
    let summary: Option<Vec<SummaryRow>> = read_rows(&out_dir.join(table::PREDICTION_SUMMARY))?;
    if correlations.is_none() && summary.is_none() {
        return Err(PipelineError::MissingStage(out_dir.join(table::CORRELATIONS)));
    }
    let mut md = String::new();
    writeln!(md, "# {dataset_name}\n").unwrap();

    if let Some(rows) = correlations {
        writeln!(md, "## Significant correlations\n").unwrap();
        let hits: Vec<&CorrelationRow> = rows.iter().filter(|r| r.significant).collect();
        if hits.is_empty() {
            writeln!(md, "None after Benjamini-Hochberg correction.\n").unwrap();
        } else {
            writeln!(md, "| outcome | controls | feature | n | r | p (adjusted) |").unwrap();
            writeln!(md, "|---|---|---|---:|---:|---:|").unwrap();
            for r in hits {
                let controls = if r.controls.is_empty() { "-" } else { r.controls.as_str() };
                writeln!(
                    md,
                    "| {} | {} | {} | {} | {:.3} | {:.2e} |",
                    r.outcome, controls, r.feature, r.n, r.r, r.p_adj
                )
                .unwrap();
            }
            writeln!(md).unwrap();
        }
    }

    if let Some(rows) = summary {
        writeln!(md, "## Prediction\n").unwrap();
        writeln!(md, "Mean held-out Pearson r with MSE in parentheses.\n").unwrap();
        let mut sets: Vec<&str> = Vec::new();
        let mut cells: BTreeMap<(&str, &str, &str), String> = BTreeMap::new();
        for r in &rows {
            if !sets.contains(&r.feature_set.as_str()) {
                sets.push(&r.feature_set);
            }
            cells.insert((&r.feature_set, &r.task, &r.mode), cell(r.mean_r, r.mean_mse));
        }
        let cols = [("depression", "ST"), ("depression", "MT"), ("anxiety", "ST"), ("anxiety", "MT")];
        writeln!(md, "| feature set | depression ST | depression MT | anxiety ST | anxiety MT |").unwrap();
        writeln!(md, "|---|---|---|---|---|").unwrap();
        for set in sets {
            let line: Vec<String> = cols
                .iter()
                .map(|&(task, mode)| cells.get(&(set, task, mode)).cloned().unwrap_or_else(|| "-".into()))
                .collect();
            writeln!(md, "| {set} | {} |", line.join(" | ")).unwrap();
        }
    }
    let path = out_dir.join(table::REPORT);
    std::fs::write(&path, &md).map_err(|e| PipelineError::io(&path, e))?;
    Ok(md)
}
