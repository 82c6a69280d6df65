//! Imputation accuracy against ground truth.
//!
//! Imputation R² is the R² of regressing imputed values on true values over
//! the cells masked by injection. With an intercept that equals the squared
//! Pearson correlation, so it is invariant to affine maps of either side.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Role};
use crate::error::{Error, Result};
use crate::stats;

/// Fewest evaluated cells for which R² is reported.
pub const MIN_CELLS: usize = 3;

/// Squared correlation of `imputed` with `truth`; 0 when either is constant.
pub fn imputation_r2(imputed: &[f64], truth: &[f64]) -> Result<f64> {
    if imputed.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} imputed values vs {} true values",
            imputed.len(),
            truth.len()
        )));
    }
    if imputed.len() < MIN_CELLS {
        return Err(Error::InvalidArgument(format!(
            "imputation R² needs at least {MIN_CELLS} cells, got {}",
            imputed.len()
        )));
    }
    Ok(stats::pearson(truth, imputed).map_or(0.0, |r| r * r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureR2 {
    pub feature: String,
    pub r2: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Report {
    pub method: String,
    pub replicate: usize,
    /// Pooled over every masked cell after standardizing each feature by its ground-truth mean and sd.
    pub overall: f64,
    /// Feature order follows the matrix.
    pub per_feature: Vec<FeatureR2>,
    /// Features with too few masked cells to score.
    pub omitted: Vec<String>,
}

impl R2Report {
    pub fn feature(&self, name: &str) -> Option<f64> {
        self.per_feature.iter().find(|f| f.feature == name).map(|f| f.r2)
    }
}

fn check_shapes(completed: &DataMatrix, truth: &DataMatrix, masked: &DataMatrix) -> Result<()> {
    if completed.names() != truth.names() || masked.names() != truth.names() {
        return Err(Error::Shape("completed, truth and masked matrices must share columns".into()));
    }
    if completed.n_rows() != truth.n_rows() || masked.n_rows() != truth.n_rows() {
        return Err(Error::Shape("completed, truth and masked matrices must share rows".into()));
    }
    Ok(())
}

fn masked_pairs(completed: &DataMatrix, truth: &DataMatrix, masked: &DataMatrix, j: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mc = &masked.columns()[j];
    let (mut imp, mut tru) = (Vec::new(), Vec::new());
    for i in (0..mc.len()).filter(|&i| !mc.observed()[i]) {
        let v = completed.columns()[j]
            .get(i)
            .ok_or_else(|| Error::MissingCells(mc.name.clone()))?;
        let t = truth.columns()[j]
            .get(i)
            .ok_or_else(|| Error::MissingCells(format!("{} (ground truth)", mc.name)))?;
        imp.push(v);
        tru.push(t);
    }
    Ok((imp, tru))
}

/// Imputation R² for each feature column with at least [`MIN_CELLS`] masked cells.
pub fn per_feature_r2(completed: &DataMatrix, truth: &DataMatrix, masked: &DataMatrix) -> Result<(Vec<FeatureR2>, Vec<String>)> {
    check_shapes(completed, truth, masked)?;
    let mut scores = Vec::new();
    let mut omitted = Vec::new();
    for (j, c) in masked.columns().iter().enumerate() {
        if c.role != Role::Feature || c.is_complete() {
            continue;
        }
        let (imp, tru) = masked_pairs(completed, truth, masked, j)?;
        if imp.len() < MIN_CELLS {
            log::warn!("feature '{}' has only {} masked cells; R² omitted", c.name, imp.len());
            omitted.push(c.name.clone());
            continue;
        }
        scores.push(FeatureR2 {
            feature: c.name.clone(),
            r2: imputation_r2(&imp, &tru)?,
            cells: imp.len(),
        });
    }
    Ok((scores, omitted))
}

/// Per-feature and pooled R² for one completed matrix.
pub fn evaluate(
    completed: &DataMatrix,
    truth: &DataMatrix,
    masked: &DataMatrix,
    method: &str,
    replicate: usize,
) -> Result<R2Report> {
    let (per_feature, omitted) = per_feature_r2(completed, truth, masked)?;
    let mut pooled_imp = Vec::new();
    let mut pooled_tru = Vec::new();
    for (j, c) in masked.columns().iter().enumerate() {
        if c.role != Role::Feature || c.is_complete() {
            continue;
        }
        let all = truth.columns()[j].observed_values();
        let (mean, sd) = (stats::mean(&all), stats::sample_sd(&all));
        let sd = if sd > 0.0 { sd } else { 1.0 };
        let (imp, tru) = masked_pairs(completed, truth, masked, j)?;
        pooled_imp.extend(imp.iter().map(|v| (v - mean) / sd));
        pooled_tru.extend(tru.iter().map(|v| (v - mean) / sd));
    }
    let overall = imputation_r2(&pooled_imp, &pooled_tru)?;
    Ok(R2Report {
        method: method.to_owned(),
        replicate,
        overall,
        per_feature,
        omitted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: String,
    pub replicates: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Mean per-feature R² across replicates (features in first-seen order).
    pub per_feature_mean: Vec<FeatureR2>,
}

impl MethodAggregate {
    pub fn feature(&self, name: &str) -> Option<f64> {
        self.per_feature_mean.iter().find(|f| f.feature == name).map(|f| f.r2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// Sorted by method name.
    pub methods: Vec<MethodAggregate>,
}

impl AggregateReport {
    pub fn method(&self, name: &str) -> Option<&MethodAggregate> {
        self.methods.iter().find(|m| m.method == name)
    }
}

/// Mean/min/max of overall R² and mean per-feature R² for each method.
pub fn aggregate(reports: &[R2Report]) -> AggregateReport {
    let mut sorted: Vec<&R2Report> = reports.iter().collect();
    sorted.sort_by(|a, b| a.method.cmp(&b.method).then(a.replicate.cmp(&b.replicate)));
    let mut by_method: BTreeMap<&str, Vec<&R2Report>> = BTreeMap::new();
    for r in sorted {
        by_method.entry(r.method.as_str()).or_default().push(r);
    }
    let methods = by_method
        .into_iter()
        .map(|(method, reps)| {
            let overall: Vec<f64> = reps.iter().map(|r| r.overall).collect();
            let mut features: Vec<String> = Vec::new();
            let mut sums: Vec<(f64, usize, usize)> = Vec::new();
            for r in &reps {
                for f in &r.per_feature {
                    let idx = match features.iter().position(|n| *n == f.feature) {
                        Some(i) => i,
                        None => {
                            features.push(f.feature.clone());
                            sums.push((0.0, 0, 0));
                            features.len() - 1
                        }
                    };
                    sums[idx].0 += f.r2;
                    sums[idx].1 += 1;
                    sums[idx].2 += f.cells;
                }
            }
            MethodAggregate {
                method: method.to_owned(),
                replicates: reps.len(),
                mean: stats::mean(&overall),
                min: overall.iter().copied().fold(f64::INFINITY, f64::min),
                max: overall.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                per_feature_mean: features
                    .into_iter()
                    .zip(sums)
                    .map(|(feature, (s, c, cells))| FeatureR2 {
                        feature,
                        r2: s / c as f64,
                        cells,
                    })
                    .collect(),
            }
        })
        .collect();
    AggregateReport { methods }
}

/// Tidy rows: method, replicate, feature (or `ALL`), r2.
pub fn write_tidy_csv(reports: &[R2Report], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["method", "replicate", "feature", "r2"])?;
    let mut sorted: Vec<&R2Report> = reports.iter().collect();
    sorted.sort_by(|a, b| a.replicate.cmp(&b.replicate).then(a.method.cmp(&b.method)));
    for r in sorted {
        let rep = r.replicate.to_string();
        w.write_record([r.method.as_str(), &rep, "ALL", &format!("{}", r.overall)])?;
        for f in &r.per_feature {
            w.write_record([r.method.as_str(), &rep, &f.feature, &format!("{}", f.r2)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-feature R² from a tidy CSV, optionally restricted to one method/replicate.
pub fn read_tidy_feature_r2(path: impl AsRef<Path>, method: Option<&str>, replicate: Option<usize>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(f);
    let mut out: Vec<(String, f64)> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_owned();
        if method.is_some_and(|m| m != field(0)) {
            continue;
        }
        if replicate.is_some_and(|r| field(1).parse::<usize>().ok() != Some(r)) {
            continue;
        }
        let feature = field(2);
        if feature == "ALL" {
            continue;
        }
        let r2 = field(3).parse::<f64>().map_err(|_| Error::Ingestion {
            row: row + 1,
            column: "r2".into(),
            value: field(3),
        })?;
        if out.iter().any(|(f, _)| *f == feature) {
            return Err(Error::InvalidArgument(format!(
                "feature '{feature}' appears more than once; filter by method and replicate"
            )));
        }
        out.push((feature, r2));
    }
    Ok(out)
}
