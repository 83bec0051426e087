use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bh_correct, partial_corr, Correlation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub user_id: String,
    pub depression: f64,
    pub anxiety: f64,
    pub age: f64,
    /// 1 for female, 0 for male.
    pub gender: f64,
}

pub const OUTCOME_COLUMNS: [&str; 4] = ["depression", "anxiety", "age", "gender"];

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    rows: Vec<OutcomeRecord>,
}

impl OutcomeTable {
    pub fn new(rows: Vec<OutcomeRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for row in &rows {
            if !seen.insert(row.user_id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate user `{}`", row.user_id)));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[OutcomeRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn value(row: &OutcomeRecord, column: &str) -> Option<f64> {
        match column {
            "depression" => Some(row.depression),
            "anxiety" => Some(row.anxiety),
            "age" => Some(row.age),
            "gender" => Some(row.gender),
            _ => None,
        }
    }

    /// Copy with depression and anxiety rescaled to mean 0, sample sd 1.
    pub fn z_scaled(&self) -> Result<Self> {
        let dep: Vec<f64> = self.rows.iter().map(|r| r.depression).collect();
        let anx: Vec<f64> = self.rows.iter().map(|r| r.anxiety).collect();
        let dep = super::z_normalize(&dep).map_err(|_| Error::DegenerateColumn("depression".into()))?;
        let anx = super::z_normalize(&anx).map_err(|_| Error::DegenerateColumn("anxiety".into()))?;
        let rows = self
            .rows
            .iter()
            .zip(dep.into_iter().zip(anx))
            .map(|(r, (d, a))| OutcomeRecord {
                depression: d,
                anxiety: a,
                ..r.clone()
            })
            .collect();
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub name: String,
    /// One entry per user of the owning table; `None` marks an absent value.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub user_ids: Vec<String>,
    pub columns: Vec<FeatureColumn>,
}

/// One family of tests: every feature against `outcome`, controlling for `controls`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSpec {
    pub outcome: String,
    pub controls: Vec<String>,
}

impl AnalysisSpec {
    pub fn new(outcome: &str, controls: &[&str]) -> Self {
        Self {
            outcome: outcome.to_string(),
            controls: controls.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub feature: String,
    pub outcome: String,
    pub n: usize,
    pub r: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub significant: bool,
    pub controls: Vec<String>,
}

/// Partial correlation of every feature with every analysed outcome.
///
/// Absent feature values are dropped per test. Benjamini-Hochberg runs within
/// each analysis family. Results come back grouped by analysis, strongest first.
pub fn correlate_all(
    features: &FeatureTable,
    outcomes: &OutcomeTable,
    analyses: &[AnalysisSpec],
    q: f64,
) -> Result<Vec<CorrelationResult>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Config(format!("significance level {q} outside (0, 1)")));
    }
    for c in &features.columns {
        if c.values.len() != features.user_ids.len() {
            return Err(Error::InvalidInput(format!(
                "feature `{}` has {} values for {} users",
                c.name,
                c.values.len(),
                features.user_ids.len()
            )));
        }
    }
    for spec in analyses {
        for col in std::iter::once(&spec.outcome).chain(&spec.controls) {
            if !OUTCOME_COLUMNS.contains(&col.as_str()) {
                return Err(Error::Config(format!("unknown outcome column `{col}`")));
            }
        }
    }

    let by_user: BTreeMap<&str, &OutcomeRecord> =
        outcomes.rows.iter().map(|r| (r.user_id.as_str(), r)).collect();
    // Row index into the feature table paired with the outcome record.
    let joined: Vec<(usize, &OutcomeRecord)> = features
        .user_ids
        .iter()
        .enumerate()
        .filter_map(|(i, u)| by_user.get(u.as_str()).map(|r| (i, *r)))
        .collect();
    let max_controls = analyses.iter().map(|a| a.controls.len()).max().unwrap_or(0);
    if joined.len() < max_controls + 3 {
        return Err(Error::InsufficientData {
            have: joined.len(),
            need: max_controls + 3,
        });
    }

    let mut results = Vec::new();
    for spec in analyses {
        let y: Vec<f64> = joined
            .iter()
            .map(|(_, r)| OutcomeTable::value(r, &spec.outcome).expect("validated column"))
            .collect();
        super::z_normalize(&y).map_err(|_| Error::DegenerateColumn(spec.outcome.clone()))?;
        let controls: Vec<Vec<f64>> = spec
            .controls
            .iter()
            .map(|c| {
                joined
                    .iter()
                    .map(|(_, r)| OutcomeTable::value(r, c).expect("validated column"))
                    .collect()
            })
            .collect();

        let tested: Vec<(String, Correlation)> = features
            .columns
            .par_iter()
            .map(|col| test_feature(col, &joined, &y, spec, &controls).map(|c| c.map(|c| (col.name.clone(), c))))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();

        let p: Vec<f64> = tested.iter().map(|(_, c)| c.p).collect();
        let bh = bh_correct(&p, q)?;
        let mut family: Vec<CorrelationResult> = tested
            .into_iter()
            .zip(bh.adjusted.into_iter().zip(bh.significant))
            .map(|((feature, c), (p_adjusted, significant))| CorrelationResult {
                feature,
                outcome: spec.outcome.clone(),
                n: c.n,
                r: c.r,
                p_raw: c.p,
                p_adjusted,
                significant,
                controls: spec.controls.clone(),
            })
            .collect();
        family.sort_by(|a, b| b.r.abs().total_cmp(&a.r.abs()).then_with(|| a.feature.cmp(&b.feature)));
        results.extend(family);
    }
    Ok(results)
}

/// `Ok(None)` when the feature cannot be tested (too few values, constant).
fn test_feature(
    col: &FeatureColumn,
    joined: &[(usize, &OutcomeRecord)],
    y: &[f64],
    spec: &AnalysisSpec,
    controls: &[Vec<f64>],
) -> Result<Option<Correlation>> {
    let keep: Vec<usize> = joined
        .iter()
        .enumerate()
        .filter(|(_, (i, _))| col.values[*i].is_some())
        .map(|(j, _)| j)
        .collect();
    let need = spec.controls.len() + 3;
    if keep.len() < need {
        log::warn!(
            "skipping `{}` vs `{}`: {} rows, need {need}",
            col.name,
            spec.outcome,
            keep.len()
        );
        return Ok(None);
    }
    let x: Vec<f64> = keep.iter().map(|&j| col.values[joined[j].0].expect("kept")).collect();
    let ys: Vec<f64> = keep.iter().map(|&j| y[j]).collect();
    let zs: Vec<Vec<f64>> = controls
        .iter()
        .map(|c| keep.iter().map(|&j| c[j]).collect())
        .collect();
    let named: Vec<(&str, &[f64])> = spec
        .controls
        .iter()
        .map(String::as_str)
        .zip(zs.iter().map(Vec::as_slice))
        .collect();

    match partial_corr(&x, &ys, &named) {
        Ok(c) => Ok(Some(c)),
        // The controls explain the feature entirely: no association left.
        Err(Error::DegenerateResidual(ref which)) if which == "x" && !named.is_empty() => {
            let n = x.len();
            Ok(Some(Correlation {
                r: 0.0,
                p: 1.0,
                n,
                df: n - 2 - named.len(),
            }))
        }
        Err(Error::DegenerateColumn(ref which)) if which == "x" => {
            log::warn!("skipping constant feature `{}` vs `{}`", col.name, spec.outcome);
            Ok(None)
        }
        Err(Error::DegenerateResidual(_)) => Err(Error::DegenerateResidual(spec.outcome.clone())),
        Err(Error::DegenerateColumn(_)) => Err(Error::DegenerateColumn(spec.outcome.clone())),
        Err(e) => Err(e),
    }
}
