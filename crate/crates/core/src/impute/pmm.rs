//! Predictive mean matching inside chained equations.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::seed;

use super::{Diagnostics, Frame, ImputationResult, ImputeOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmmConfig {
    /// Number of imputations averaged into the final matrix.
    pub m: usize,
    /// Donor pool size per missing cell.
    pub donors: usize,
    /// Chained-equation sweeps per imputation.
    pub cycles: usize,
    /// Ridge factor applied to the diagonal of XᵀX.
    pub ridge: f64,
}

impl Default for PmmConfig {
    fn default() -> Self {
        PmmConfig {
            m: 15,
            donors: 5,
            cycles: 5,
            ridge: 1e-5,
        }
    }
}

impl PmmConfig {
    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.donors == 0 || self.cycles == 0 {
            return Err(Error::InvalidArgument("PMM needs m, donors and cycles ≥ 1".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidArgument("PMM ridge must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// One chained-equation imputation. Returns the completed frame values and
/// the mean absolute change of imputed cells per sweep.
fn single_imputation(frame: &Frame, cfg: &PmmConfig, seed: u64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut rng = seed::rng(seed);
    let mut x = frame.x.clone();
    let n = frame.n_rows();
    let q = frame.n_cols();
    let mut deltas = Vec::with_capacity(cfg.cycles);

    for _ in 0..cfg.cycles {
        let mut change = 0.0;
        let mut changed = 0usize;
        for &j in &frame.targets {
            let obs = frame.observed_rows(j);
            let mis = frame.missing_rows(j);
            // Design: intercept plus every other analysis column.
            let design = |i: usize, c: usize| -> f64 {
                if c == 0 {
                    1.0
                } else {
                    let src = if c - 1 < j { c - 1 } else { c };
                    x[(i, src)]
                }
            };
            let dim = q;
            let needed = (q - 1) + 2;
            if obs.len() < needed {
                return Err(Error::InsufficientObservations {
                    column: frame.names[j].clone(),
                    observed: obs.len(),
                    needed,
                });
            }
            if obs.len() < cfg.donors {
                return Err(Error::InsufficientObservations {
                    column: frame.names[j].clone(),
                    observed: obs.len(),
                    needed: cfg.donors,
                });
            }
            let xo = DMatrix::from_fn(obs.len(), dim, |r, c| design(obs[r], c));
            let yo = DVector::from_iterator(obs.len(), obs.iter().map(|&i| x[(i, j)]));
            let mut xtx = xo.transpose() * &xo;
            for d in 0..dim {
                xtx[(d, d)] += cfg.ridge * xtx[(d, d)];
            }
            let chol = xtx
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Singular(frame.names[j].clone()))?;
            let v = chol.inverse();
            let beta_hat = &v * (xo.transpose() * &yo);
            let resid = &yo - &xo * &beta_hat;
            let rss = resid.norm_squared();
            let df = (obs.len() - dim).max(1) as f64;
            let chi: f64 = ChiSquared::new(df)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?
                .sample(&mut rng);
            let sigma = (rss / chi).sqrt();
            let v_chol = v
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Singular(frame.names[j].clone()))?;
            let z = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let beta_star = &beta_hat + v_chol.l() * z * sigma;

            let predict = |i: usize| (0..dim).map(|c| design(i, c) * beta_star[c]).sum::<f64>();
            let mut donors: Vec<(f64, usize)> = obs.iter().map(|&i| (predict(i), i)).collect();
            donors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let yhat_mis: Vec<f64> = mis.iter().map(|&i| predict(i)).collect();

            for (&i, &target) in mis.iter().zip(&yhat_mis) {
                let pool = nearest(&donors, target, cfg.donors);
                let pick = pool[rng.random_range(0..pool.len())];
                let new = x[(pick, j)];
                change += (new - x[(i, j)]).abs();
                changed += 1;
                x[(i, j)] = new;
            }
        }
        deltas.push(if changed > 0 { change / changed as f64 } else { 0.0 });
    }
    debug_assert_eq!(x.nrows(), n);
    Ok((x, deltas))
}

/// Row ids of the `k` donors whose prediction is closest to `target`.
/// `sorted` is ordered by prediction; ties prefer the lower-prediction side.
fn nearest(sorted: &[(f64, usize)], target: f64, k: usize) -> Vec<usize> {
    let k = k.min(sorted.len());
    let mut hi = sorted.partition_point(|d| d.0 < target);
    let mut lo = hi;
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let take_low = match (lo > 0, hi < sorted.len()) {
            (true, true) => target - sorted[lo - 1].0 <= sorted[hi].0 - target,
            (true, false) => true,
            (false, true) => false,
            (false, false) => break,
        };
        if take_low {
            lo -= 1;
            out.push(sorted[lo].1);
        } else {
            out.push(sorted[hi].1);
            hi += 1;
        }
    }
    out
}

/// All `cfg.m` single imputations; imputation `r` uses `child_seed(seed, r)`.
pub fn pmm_imputations(
    m: &DataMatrix,
    cfg: &PmmConfig,
    opts: &ImputeOptions,
    seed: u64,
) -> Result<Vec<DataMatrix>> {
    Ok(run(m, cfg, opts, seed)?.0)
}

fn run(m: &DataMatrix, cfg: &PmmConfig, opts: &ImputeOptions, seed: u64) -> Result<(Vec<DataMatrix>, Frame, Vec<Vec<f64>>)> {
    cfg.validate()?;
    let frame = Frame::build(m, opts)?;
    if frame.n_cols() < 2 && !frame.targets.is_empty() {
        return Err(Error::InvalidArgument("PMM needs at least one predictor column".into()));
    }
    let runs: Vec<(DMatrix<f64>, Vec<f64>)> = (0..cfg.m)
        .into_par_iter()
        .map(|r| single_imputation(&frame, cfg, seed::child_seed(seed, r as u64)))
        .collect::<Result<_>>()?;
    let deltas = runs.iter().map(|(_, d)| d.clone()).collect();
    let mats = runs.iter().map(|(x, _)| frame.write_back(m, x)).collect();
    Ok((mats, frame, deltas))
}

/// PMM with `cfg.m` imputations; the result is their cell-wise mean.
pub fn impute_pmm(m: &DataMatrix, cfg: &PmmConfig, opts: &ImputeOptions, seed: u64) -> Result<ImputationResult> {
    let (mats, _, deltas) = run(m, cfg, opts, seed)?;
    let columns = m
        .columns()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if c.is_complete() {
                return c.clone();
            }
            let values = (0..m.n_rows())
                .map(|i| match c.get(i) {
                    Some(v) => v,
                    None => mats.iter().map(|x| x.columns()[j].values()[i]).sum::<f64>() / mats.len() as f64,
                })
                .collect();
            crate::data::Column::new(c.name.clone(), c.role, values)
        })
        .collect();
    let mean_delta: Vec<f64> = (0..cfg.cycles)
        .map(|s| deltas.iter().map(|d| d[s]).sum::<f64>() / deltas.len() as f64)
        .collect();
    Ok(ImputationResult {
        completed: DataMatrix::new(columns)?,
        method: "pmm".into(),
        seed,
        diagnostics: Diagnostics {
            iterations: cfg.cycles,
            deltas: mean_delta,
            converged: true,
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Column, Role};
    use crate::impute::test_support::{assert_contract, small_masked};
    use std::collections::HashSet;

    #[test]
    fn nearest_picks_closest() {
        let sorted = vec![(0.0, 10), (1.0, 11), (2.0, 12), (3.0, 13), (10.0, 14)];
        let mut got = nearest(&sorted, 2.2, 3);
        got.sort();
        assert_eq!(got, vec![11, 12, 13]);
        assert_eq!(nearest(&sorted, -5.0, 1), vec![10]);
        assert_eq!(nearest(&sorted, 50.0, 2), vec![14, 13]);
    }

    #[test]
    fn donor_support_and_contract() {
        let (_, masked) = small_masked(120, 0.3, 2);
        let cfg = PmmConfig {
            m: 4,
            ..Default::default()
        };
        let opts = ImputeOptions::default();
        for imp in pmm_imputations(&masked, &cfg, &opts, 3).unwrap() {
            assert_contract(&masked, &imp);
            for c in masked.columns().iter().filter(|c| !c.is_complete()) {
                let support: HashSet<u64> = c.observed_values().iter().map(|v| v.to_bits()).collect();
                let filled = imp.column(&c.name).unwrap();
                for i in (0..c.len()).filter(|&i| !c.observed()[i]) {
                    assert!(support.contains(&filled.values()[i].to_bits()));
                }
            }
        }
        let out = impute_pmm(&masked, &cfg, &opts, 3).unwrap();
        assert_contract(&masked, &out.completed);
        assert_eq!(out, impute_pmm(&masked, &cfg, &opts, 3).unwrap());
    }

    #[test]
    fn result_is_mean_of_imputations() {
        let (_, masked) = small_masked(80, 0.25, 6);
        let cfg = PmmConfig::default();
        let opts = ImputeOptions::default();
        let singles = pmm_imputations(&masked, &cfg, &opts, 17).unwrap();
        assert_eq!(singles.len(), 15);
        let pooled = impute_pmm(&masked, &cfg, &opts, 17).unwrap();
        for (j, c) in masked.columns().iter().enumerate() {
            for i in (0..c.len()).filter(|&i| !c.observed()[i]) {
                let mean = singles.iter().map(|s| s.columns()[j].values()[i]).sum::<f64>() / 15.0;
                assert!((pooled.completed.columns()[j].values()[i] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_linear_relation_copies_nearest_rows() {
        // y = 2x exactly; with one donor the match is the row with the nearest x.
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|v| 2.0 * v).collect();
        let mut observed = vec![true; 40];
        for i in [3, 11, 12, 27] {
            observed[i] = false;
        }
        let m = DataMatrix::new(vec![
            Column::new("x", Role::Feature, xs.clone()),
            Column::with_mask("y", Role::Feature, ys.clone(), observed.clone()),
        ])
        .unwrap();
        let cfg = PmmConfig {
            m: 1,
            donors: 1,
            ..Default::default()
        };
        let out = &pmm_imputations(&m, &cfg, &ImputeOptions::default(), 1).unwrap()[0];
        let y = out.column("y").unwrap();
        for i in [3, 11, 12, 27] {
            let nearest = (0..40)
                .filter(|&r| observed[r])
                .min_by(|&a, &b| (xs[a] - xs[i]).abs().total_cmp(&(xs[b] - xs[i]).abs()))
                .unwrap();
            let candidates: Vec<f64> = (0..40)
                .filter(|&r| observed[r] && (xs[r] - xs[i]).abs() == (xs[nearest] - xs[i]).abs())
                .map(|r| ys[r])
                .collect();
            assert!(candidates.contains(&y.values()[i]), "row {i}: {}", y.values()[i]);
        }
    }

    #[test]
    fn insufficient_rows() {
        let m = DataMatrix::new(vec![
            Column::from_options("a", Role::Feature, &[Some(1.0), Some(2.0), None]),
            Column::new("b", Role::Feature, vec![1.0, 2.0, 3.0]),
            Column::new("c", Role::Feature, vec![0.0, 2.0, 1.0]),
        ])
        .unwrap();
        assert!(matches!(
            impute_pmm(&m, &PmmConfig::default(), &ImputeOptions::default(), 0),
            Err(Error::InsufficientObservations { .. })
        ));
    }
}
