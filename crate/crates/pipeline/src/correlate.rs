//! Feature-outcome partial correlations with per-family FDR control.

use std::collections::BTreeMap;
use std::path::Path;

use pixmood_core::stats::{correlate_all, AnalysisSpec, CorrelationResult, FeatureColumn, FeatureTable, OutcomeRecord, OutcomeTable};

use crate::config::RunConfig;
use crate::error::{CoreContext, PipelineError, Result};
use crate::extract::FeatureSets;
use crate::manifest::Dataset;
use crate::table::{self, read_json, write_csv, Table};

/// Feature columns of the included users, grouped by feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFeatures {
    pub user_ids: Vec<String>,
    pub sets: Vec<(String, Vec<FeatureColumn>)>,
}

impl UserFeatures {
    pub fn table(&self) -> FeatureTable {
        FeatureTable {
            user_ids: self.user_ids.clone(),
            columns: self.sets.iter().flat_map(|(_, cols)| cols.iter().cloned()).collect(),
        }
    }
}

/// Reads the extract outputs, plus cluster weights when they exist.
pub fn load_user_features(out_dir: &Path) -> Result<UserFeatures> {
    let users_path = out_dir.join(table::USER_FEATURES);
    let users = Table::read(&users_path)?;
    let layout: FeatureSets = read_json(&out_dir.join(table::FEATURE_SETS))?;
    let mut sets = Vec::new();
    for (name, cols) in layout.sets {
        let columns = cols
            .iter()
            .map(|c| {
                users
                    .column(c)
                    .map(|values| FeatureColumn { name: c.clone(), values })
                    .ok_or_else(|| PipelineError::format(&users_path, format!("missing column `{c}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        sets.push((name, columns));
    }

    let clusters_path = out_dir.join(table::CLUSTER_FEATURES);
    if clusters_path.exists() {
        let clusters = Table::read(&clusters_path)?;
        let index: BTreeMap<&str, usize> = clusters.ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let columns = clusters
            .columns
            .iter()
            .enumerate()
            .map(|(j, name)| FeatureColumn {
                name: name.clone(),
                values: users
                    .ids
                    .iter()
                    .map(|u| index.get(u.as_str()).and_then(|&i| clusters.rows[i][j]))
                    .collect(),
            })
            .collect();
        sets.push(("clusters".into(), columns));
    } else {
        log::info!("no {}; cluster features skipped", table::CLUSTER_FEATURES);
    }
    Ok(UserFeatures {
        user_ids: users.ids,
        sets,
    })
}

pub fn outcome_table(dataset: &Dataset) -> Result<OutcomeTable> {
    let rows = dataset
        .included_users()
        .map(|u| OutcomeRecord {
            user_id: u.user_id.clone(),
            depression: u.depression,
            anxiety: u.anxiety,
            age: u.age,
            gender: u.gender,
        })
        .collect();
    OutcomeTable::new(rows).context(|| "outcomes".into())
}

/// Demographics alone, then each condition controlling for age, gender and
/// the other condition. `no_controls` drops every control.
pub fn analyses(no_controls: bool) -> Vec<AnalysisSpec> {
    let specs = [
        AnalysisSpec::new("age", &[]),
        AnalysisSpec::new("gender", &[]),
        AnalysisSpec::new("depression", &["age", "gender", "anxiety"]),
        AnalysisSpec::new("anxiety", &["age", "gender", "depression"]),
    ];
    specs
        .into_iter()
        .map(|mut s| {
            if no_controls {
                s.controls.clear();
            }
            s
        })
        .collect()
}

pub fn run_correlate(cfg: &RunConfig, dataset: &Dataset, out_dir: &Path, no_controls: bool) -> Result<Vec<CorrelationResult>> {
    let features = load_user_features(out_dir)?;
    let outcomes = outcome_table(dataset)?;
    let results = correlate_all(&features.table(), &outcomes, &analyses(no_controls), cfg.significance)
        .context(|| format!("correlating {} users", features.user_ids.len()))?;
    let header: Vec<String> = ["feature", "outcome", "n", "r", "p_raw", "p_adj", "significant", "controls"]
        .map(String::from)
        .to_vec();
    write_csv(
        &out_dir.join(table::CORRELATIONS),
        &header,
        results.iter().map(|r| {
            vec![
                r.feature.clone(),
                r.outcome.clone(),
                r.n.to_string(),
                r.r.to_string(),
                r.p_raw.to_string(),
                r.p_adjusted.to_string(),
                r.significant.to_string(),
                r.controls.join("+"),
            ]
        }),
    )?;
    Ok(results)
}
