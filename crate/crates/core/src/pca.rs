//! Correlation-method PCA on complete data and NIPALS PCA on incomplete data.
//!
//! Sign convention for every component: the loading entry with the largest
//! magnitude is positive (first such entry on exact ties).

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{correlation_matrix, standardize, DataMatrix};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaMethod {
    Eigen,
    Nipals,
    /// Loadings read back from a file.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub method: PcaMethod,
    pub variables: Vec<String>,
    /// variables × k, unit-norm columns.
    pub loadings: DMatrix<f64>,
    /// rows × k.
    pub scores: DMatrix<f64>,
    /// Share of total (observed) variance per component.
    pub explained: Vec<f64>,
    /// Iterations used per component (NIPALS only).
    pub iterations: Vec<usize>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// `(variable, PC1 loading)` pairs in variable order.
    pub fn pc1(&self) -> Vec<(String, f64)> {
        if self.n_components() == 0 {
            return Vec::new();
        }
        self.variables
            .iter()
            .enumerate()
            .map(|(j, v)| (v.clone(), self.loadings[(j, 0)]))
            .collect()
    }

    /// Largest absolute off-diagonal inner product between loading columns.
    pub fn max_loading_overlap(&self) -> f64 {
        let k = self.n_components();
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in (a + 1)..k {
                worst = worst.max(self.loadings.column(a).dot(&self.loadings.column(b)).abs());
            }
        }
        worst
    }

    /// Rank-`k` reconstruction of cell (i, j) on the scale PCA was fitted on.
    pub fn reconstruct(&self, i: usize, j: usize, k: usize) -> f64 {
        (0..k.min(self.n_components()))
            .map(|c| self.scores[(i, c)] * self.loadings[(j, c)])
            .sum()
    }

    pub fn write_loadings_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut rows = vec![header("variable", self.n_components())];
        for (j, v) in self.variables.iter().enumerate() {
            let mut r = vec![v.clone()];
            r.extend(self.loadings.row(j).iter().map(|x| format!("{x}")));
            rows.push(r);
        }
        write_rows(path.as_ref(), &rows)
    }

    pub fn write_scores_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut rows = vec![header("row", self.n_components())];
        for i in 0..self.scores.nrows() {
            let mut r = vec![i.to_string()];
            r.extend(self.scores.row(i).iter().map(|x| format!("{x}")));
            rows.push(r);
        }
        write_rows(path.as_ref(), &rows)
    }

    pub fn write_explained_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut rows = vec![vec!["component".to_owned(), "explained".to_owned()]];
        for (c, e) in self.explained.iter().enumerate() {
            rows.push(vec![format!("PC{}", c + 1), format!("{e}")]);
        }
        write_rows(path.as_ref(), &rows)
    }

    /// Loadings-only model from a `variable,PC1,PC2,...` table.
    pub fn read_loadings_csv<R: Read>(reader: R) -> Result<PcaModel> {
        let mut rdr = csv::Reader::from_reader(reader);
        let k = rdr.headers()?.len().saturating_sub(1);
        let mut variables = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            variables.push(rec.get(0).unwrap_or("").to_owned());
            for c in 1..=k {
                let raw = rec.get(c).unwrap_or("");
                values.push(raw.trim().parse::<f64>().map_err(|_| Error::Ingestion {
                    row: row + 1,
                    column: format!("PC{c}"),
                    value: raw.to_owned(),
                })?);
            }
        }
        let loadings = DMatrix::from_row_slice(variables.len(), k, &values);
        Ok(PcaModel {
            method: PcaMethod::External,
            variables,
            loadings,
            scores: DMatrix::zeros(0, k),
            explained: Vec::new(),
            iterations: Vec::new(),
        })
    }

    pub fn load_loadings_csv(path: impl AsRef<Path>) -> Result<PcaModel> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        PcaModel::read_loadings_csv(f)
    }
}

fn header(first: &str, k: usize) -> Vec<String> {
    std::iter::once(first.to_owned())
        .chain((1..=k).map(|c| format!("PC{c}")))
        .collect()
}

fn write_rows(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Flip `v` so its largest-magnitude entry is positive. Returns whether it flipped.
fn orient(v: &mut [f64]) -> bool {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = j;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = j;
        }
    }
    best
}

/// Principal components of the correlation matrix of complete data.
pub fn pca_correlation(m: &DataMatrix) -> Result<PcaModel> {
    if let Some(c) = m.columns().iter().find(|c| !c.is_complete()) {
        return Err(Error::MissingCells(c.name.clone()));
    }
    if m.n_cols() < 2 {
        return Err(Error::InvalidArgument("PCA needs at least two columns".into()));
    }
    let z = standardize(m)?;
    let corr = correlation_matrix(&z)?;
    let p = corr.nrows();
    let eig = SymmetricEigen::new(corr);

    // Descending eigenvalue; exact ties fall back to the column order of each
    // eigenvector's dominant entry.
    let mut order: Vec<(usize, f64, usize)> = (0..p)
        .map(|c| {
            let v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            (c, eig.eigenvalues[c], argmax_abs(&v))
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));

    let mut loadings = DMatrix::zeros(p, p);
    let mut explained = Vec::with_capacity(p);
    for (dst, &(src, lambda, _)) in order.iter().enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        orient(&mut v);
        loadings.set_column(dst, &nalgebra::DVector::from_vec(v));
        explained.push((lambda / p as f64).max(0.0));
    }
    let (x, _) = z.to_dense();
    let scores = &x * &loadings;
    Ok(PcaModel {
        method: PcaMethod::Eigen,
        variables: m.names().into_iter().map(str::to_owned).collect(),
        loadings,
        scores,
        explained,
        iterations: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NipalsConfig {
    /// Components to extract; 0 extracts all up to rank.
    pub k: usize,
    /// Convergence threshold on the relative change of the score vector.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NipalsConfig {
    fn default() -> Self {
        NipalsConfig {
            k: 0,
            tol: 1e-9,
            max_iter: 500,
        }
    }
}

impl NipalsConfig {
    pub fn with_k(k: usize) -> Self {
        NipalsConfig {
            k,
            ..Default::default()
        }
    }
}

/// Residual below this share of the total observed sum of squares means the
/// data has no further rank.
const RANK_EXHAUSTED: f64 = 1e-14;

/// NIPALS PCA. Sums run over observed cells only, so missing cells carry
/// zero weight in every regression. The input is used as given; standardize
/// first for correlation-scale loadings.
pub fn nipals(m: &DataMatrix, cfg: &NipalsConfig) -> Result<PcaModel> {
    match nipals_partial(m, cfg)? {
        (model, None) => Ok(model),
        (_, Some(err)) => Err(err),
    }
}

/// NIPALS that keeps the components extracted before a non-convergence,
/// returning the convergence error beside them.
fn nipals_partial(m: &DataMatrix, cfg: &NipalsConfig) -> Result<(PcaModel, Option<Error>)> {
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::InvalidArgument("NIPALS needs tol > 0 and max_iter ≥ 1".into()));
    }
    let (n, p) = (m.n_rows(), m.n_cols());
    if n == 0 || p == 0 {
        return Err(Error::Shape("NIPALS on an empty matrix".into()));
    }
    let (dense, mask) = m.to_dense();
    for (j, c) in m.columns().iter().enumerate() {
        if c.observed_count() == 0 {
            return Err(Error::AllMissing(m.columns()[j].name.clone()));
        }
    }
    if let Some(i) = mask.iter().position(|r| r.iter().all(|&o| !o)) {
        return Err(Error::EmptyRow(i));
    }
    let mut x = dense.map(|v| if v.is_nan() { 0.0 } else { v });
    let obs = DMatrix::from_fn(n, p, |i, j| if mask[i][j] { 1.0 } else { 0.0 });

    let ss = |x: &DMatrix<f64>| x.iter().map(|v| v * v).sum::<f64>();
    let total_ss = ss(&x);
    let max_k = if cfg.k == 0 { n.min(p) } else { cfg.k.min(n.min(p)) };

    let mut loadings: Vec<Vec<f64>> = Vec::new();
    let mut scores: Vec<Vec<f64>> = Vec::new();
    let mut explained = Vec::new();
    let mut iterations = Vec::new();
    let mut failure = None;

    for comp in 0..max_k {
        let before = ss(&x);
        if total_ss == 0.0 || before <= RANK_EXHAUSTED * total_ss {
            break;
        }
        // Start from the column with the largest observed residual variance.
        let start = (0..p)
            .max_by(|&a, &b| {
                let var = |j: usize| {
                    let cnt = f64::max(obs.column(j).sum(), 1.0);
                    x.column(j).iter().map(|v| v * v).sum::<f64>() / cnt
                };
                var(a).total_cmp(&var(b)).then(b.cmp(&a))
            })
            .unwrap_or(0);
        let mut t: Vec<f64> = x.column(start).iter().copied().collect();
        let mut load = vec![0.0; p];
        let mut delta = f64::INFINITY;
        let mut iters = 0;
        while iters < cfg.max_iter {
            iters += 1;
            for j in 0..p {
                let (mut num, mut den) = (0.0, 0.0);
                for i in 0..n {
                    if mask[i][j] {
                        num += t[i] * x[(i, j)];
                        den += t[i] * t[i];
                    }
                }
                load[j] = if den > 0.0 { num / den } else { 0.0 };
            }
            let norm = load.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            load.iter_mut().for_each(|v| *v /= norm);
            let mut t_new = vec![0.0; n];
            for (i, ti) in t_new.iter_mut().enumerate() {
                let (mut num, mut den) = (0.0, 0.0);
                for j in 0..p {
                    if mask[i][j] {
                        num += load[j] * x[(i, j)];
                        den += load[j] * load[j];
                    }
                }
                *ti = if den > 0.0 { num / den } else { 0.0 };
            }
            let diff: f64 = t_new.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let size: f64 = t_new.iter().map(|a| a * a).sum::<f64>().sqrt();
            delta = if size > 0.0 { diff / size } else { 0.0 };
            t = t_new;
            if delta < cfg.tol {
                break;
            }
        }
        if !(delta < cfg.tol) {
            failure = Some(Error::NonConvergence {
                component: comp + 1,
                iterations: iters,
                delta,
            });
            break;
        }
        if orient(&mut load) {
            t.iter_mut().for_each(|v| *v = -*v);
        }
        for i in 0..n {
            for j in 0..p {
                if mask[i][j] {
                    x[(i, j)] -= t[i] * load[j];
                }
            }
        }
        let after = ss(&x);
        explained.push(((before - after) / total_ss).max(0.0));
        loadings.push(load);
        scores.push(t);
        iterations.push(iters);
    }

    let k = loadings.len();
    let model = PcaModel {
        method: PcaMethod::Nipals,
        variables: m.names().into_iter().map(str::to_owned).collect(),
        loadings: DMatrix::from_fn(p, k, |j, c| loadings[c][j]),
        scores: DMatrix::from_fn(n, k, |i, c| scores[c][i]),
        explained,
        iterations,
    };
    Ok((model, failure))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub k: usize,
    /// Mean squared held-out reconstruction error for k = 1..=k_max.
    pub cv_error: Vec<f64>,
}

/// Choose the NIPALS component count by row-wise cross-validation.
///
/// Rows are split into `folds` groups. For each group, loadings come from
/// NIPALS on the other rows, and every observed cell of a held-out row is
/// predicted from that row's remaining observed cells by least squares on
/// the first k loadings. Only cells with at least `k_max` other observed
/// cells in their row are scored, so every k is judged on the same cells
/// and each score regression is determined. Ties go to the smaller k.
///
/// Holding out whole rows keeps the training rows' missingness pattern
/// intact. Holding out single cells instead can leave a row observed only
/// on columns with near-zero loadings, and its score then diverges.
///
/// Trailing components can stall on sparse data. Counts beyond the last
/// component extracted in every fold are not scored, so `cv_error` may be
/// shorter than `k_max`. Failure of the first component is an error.
pub fn estimate_k(m: &DataMatrix, k_max: usize, folds: usize, seed: u64) -> Result<KEstimate> {
    if k_max == 0 || k_max > m.n_cols() {
        return Err(Error::InvalidArgument(format!(
            "k_max must lie in 1..={}, got {k_max}",
            m.n_cols()
        )));
    }
    let n = m.n_rows();
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("folds must lie in 2..={n}, got {folds}")));
    }
    if k_max == 1 {
        return Ok(KEstimate {
            k: 1,
            cv_error: Vec::new(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    let mut sse = vec![0.0; k_max];
    let mut count = 0usize;
    let mut usable = k_max;
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let (model, failure) = nipals_partial(&m.take_rows(&train)?, &NipalsConfig::with_k(k_max))?;
        if let Some(err) = failure {
            if model.n_components() == 0 {
                return Err(err);
            }
            log::warn!("estimate_k: fold {f} stopped after {} components: {err}", model.n_components());
        }
        let kf = model.n_components();
        usable = usable.min(kf);
        for i in (0..n).filter(|&i| fold_of[i] == f) {
            let seen: Vec<usize> = (0..m.n_cols()).filter(|&j| m.columns()[j].observed()[i]).collect();
            for &j in &seen {
                let others: Vec<usize> = seen.iter().copied().filter(|&o| o != j).collect();
                if others.len() < k_max {
                    continue;
                }
                let x = nalgebra::DVector::from_iterator(others.len(), others.iter().map(|&o| m.columns()[o].values()[i]));
                let truth = m.columns()[j].values()[i];
                for (k, e) in sse.iter_mut().enumerate().take(kf) {
                    let l = DMatrix::from_fn(others.len(), k + 1, |r, c| model.loadings[(others[r], c)]);
                    let t = l
                        .svd(true, true)
                        .solve(&x, 1e-12)
                        .map_err(|msg| Error::InvalidArgument(msg.into()))?;
                    let pred: f64 = (0..=k).map(|c| t[c] * model.loadings[(j, c)]).sum();
                    *e += (truth - pred) * (truth - pred);
                }
                count += 1;
            }
        }
    }
    let cv_error: Vec<f64> = sse[..usable].iter().map(|e| e / count.max(1) as f64).collect();
    let mut best = 0;
    for (k, e) in cv_error.iter().enumerate() {
        if *e < cv_error[best] {
            best = k;
        }
    }
    Ok(KEstimate { k: best + 1, cv_error })
}
