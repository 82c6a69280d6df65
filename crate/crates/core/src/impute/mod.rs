//! Imputation methods. Each takes a masked [`DataMatrix`] and returns a copy
//! whose feature-role columns are fully observed.
//!
//! Multivariate methods see the *analysis columns*: features, demographics,
//! the class column (unless excluded) and the driver (only if included).
//! Only feature columns are ever filled; observed cells are copied through
//! bit for bit.

mod forest;
mod missforest;
mod nipals;
mod pmm;
mod ppca;
mod simple;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Column, DataMatrix, Role};
use crate::error::{Error, Result};
use crate::pca::estimate_k;

pub use forest::{ForestConfig, RegressionForest};
pub use missforest::impute_missforest;
pub use nipals::impute_nipals;
pub use pmm::{impute_pmm, pmm_imputations, PmmConfig};
pub use ppca::{fit_ppca, impute_ppca, PpcaConfig, PpcaFit};
pub use simple::{impute_mean, impute_median};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputeOptions {
    /// Use the class column as a predictor.
    pub include_class: bool,
    /// Use the driver column as a predictor.
    pub include_driver: bool,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        ImputeOptions {
            include_class: true,
            include_driver: false,
        }
    }
}

/// Per-run convergence record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Per-sweep change in imputed values (PMM, missForest) or relative
    /// log-likelihood change (PPCA).
    pub deltas: Vec<f64>,
    /// Observed-data log-likelihood per EM iteration (PPCA only).
    pub log_likelihood: Vec<f64>,
    pub components: Option<usize>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    pub completed: DataMatrix,
    pub method: String,
    pub seed: u64,
    pub diagnostics: Diagnostics,
}

/// Method selection with per-method settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum MethodSpec {
    Mean,
    Median,
    Pmm(PmmConfig),
    #[serde(rename = "missforest")]
    MissForest(ForestConfig),
    Ppca(PpcaConfig),
    /// `k = None` selects the component count by cross-validation.
    Nipals { k: Option<usize> },
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Mean => "mean",
            MethodSpec::Median => "median",
            MethodSpec::Pmm(_) => "pmm",
            MethodSpec::MissForest(_) => "missforest",
            MethodSpec::Ppca(_) => "ppca",
            MethodSpec::Nipals { .. } => "nipals",
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    /// Method by name with default settings.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(MethodSpec::Mean),
            "median" => Ok(MethodSpec::Median),
            "pmm" | "pmm15" => Ok(MethodSpec::Pmm(PmmConfig::default())),
            "missforest" => Ok(MethodSpec::MissForest(ForestConfig::default())),
            "ppca" => Ok(MethodSpec::Ppca(PpcaConfig::default())),
            "nipals" => Ok(MethodSpec::Nipals {
                k: Some(DEFAULT_COMPONENTS),
            }),
            other => Err(Error::InvalidArgument(format!("unknown imputation method '{other}'"))),
        }
    }
}

/// Component count for the PCA-based imputers unless configured otherwise.
/// Three matches the cohort's structure: a dominant severity block, a
/// demographic component and a lone self-report component.
pub const DEFAULT_COMPONENTS: usize = 3;

/// Upper bound and fold count for automatic component selection.
pub const AUTO_K_MAX: usize = 5;
pub const AUTO_K_FOLDS: usize = 5;

/// Dispatch on `spec`. Component counts left to `auto` are chosen with
/// [`estimate_k`] on the standardized analysis columns.
pub fn impute(m: &DataMatrix, spec: &MethodSpec, opts: &ImputeOptions, seed: u64) -> Result<ImputationResult> {
    match spec {
        MethodSpec::Mean => impute_mean(m),
        MethodSpec::Median => impute_median(m),
        MethodSpec::Pmm(cfg) => impute_pmm(m, cfg, opts, seed),
        MethodSpec::MissForest(cfg) => impute_missforest(m, cfg, opts, seed),
        MethodSpec::Ppca(cfg) => {
            let mut cfg = cfg.clone();
            if cfg.k == 0 {
                cfg.k = auto_k(m, opts, seed)?;
            }
            impute_ppca(m, &cfg, opts, seed)
        }
        MethodSpec::Nipals { k } => {
            let k = match k {
                Some(k) => *k,
                None => auto_k(m, opts, seed)?,
            };
            impute_nipals(m, k, opts)
        }
    }
}

/// Cross-validated component count on the analysis columns.
pub fn auto_k(m: &DataMatrix, opts: &ImputeOptions, seed: u64) -> Result<usize> {
    let names = analysis_names(m, opts);
    let sub = crate::data::standardize(&m.select(&names)?)?;
    let k_max = AUTO_K_MAX.min(names.len().saturating_sub(1)).max(1);
    Ok(estimate_k(&sub, k_max, AUTO_K_FOLDS, seed)?.k)
}

pub fn analysis_names(m: &DataMatrix, opts: &ImputeOptions) -> Vec<String> {
    m.columns()
        .iter()
        .filter(|c| match c.role {
            Role::Feature | Role::Demographic => true,
            Role::Class => opts.include_class,
            Role::Driver => opts.include_driver,
        })
        .map(|c| c.name.clone())
        .collect()
}

/// Dense working copy of the analysis columns.
pub(crate) struct Frame {
    /// Index of each analysis column in the source matrix.
    pub source: Vec<usize>,
    pub names: Vec<String>,
    /// n × q values; missing cells hold the column's observed mean.
    pub x: DMatrix<f64>,
    /// `observed[j][i]`.
    pub observed: Vec<Vec<bool>>,
    /// Analysis-frame indices of feature columns with missing cells.
    pub targets: Vec<usize>,
}

impl Frame {
    pub fn build(m: &DataMatrix, opts: &ImputeOptions) -> Result<Frame> {
        let names = analysis_names(m, opts);
        let source: Vec<usize> = names.iter().map(|n| m.column_index(n)).collect::<Result<_>>()?;
        let mut targets = Vec::new();
        for (a, &s) in source.iter().enumerate() {
            let c = &m.columns()[s];
            if c.observed_count() == 0 {
                return Err(Error::AllMissing(c.name.clone()));
            }
            if !c.is_complete() {
                if c.role != Role::Feature {
                    return Err(Error::MissingCells(c.name.clone()));
                }
                targets.push(a);
            }
        }
        let n = m.n_rows();
        let means: Vec<f64> = source
            .iter()
            .map(|&s| crate::stats::mean(&m.columns()[s].observed_values()))
            .collect();
        let x = DMatrix::from_fn(n, source.len(), |i, a| {
            m.columns()[source[a]].get(i).unwrap_or(means[a])
        });
        let observed = source.iter().map(|&s| m.columns()[s].observed().to_vec()).collect();
        Ok(Frame {
            source,
            names,
            x,
            observed,
            targets,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn observed_rows(&self, j: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.observed[j][i]).collect()
    }

    pub fn missing_rows(&self, j: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| !self.observed[j][i]).collect()
    }

    /// Copy imputed values for the target columns back into `m`.
    pub fn write_back(&self, m: &DataMatrix, x: &DMatrix<f64>) -> DataMatrix {
        let mut columns = m.columns().to_vec();
        for &a in &self.targets {
            let s = self.source[a];
            let src = &m.columns()[s];
            let values = (0..m.n_rows())
                .map(|i| src.get(i).unwrap_or(x[(i, a)]))
                .collect();
            columns[s] = Column::new(src.name.clone(), src.role, values);
        }
        DataMatrix::from_parts(columns)
    }
}
