use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::seed;

use super::{Diagnostics, ForestConfig, Frame, ImputationResult, ImputeOptions, RegressionForest};

/// Iterative random-forest imputation.
///
/// Starts from mean imputation and refits one forest per incomplete feature
/// (ascending missingness) each sweep. Stops the first time the normalized
/// sweep-over-sweep change of the imputed values grows, returning the
/// previous sweep, or after `max_rounds` sweeps.
pub fn impute_missforest(
    m: &DataMatrix,
    cfg: &ForestConfig,
    opts: &ImputeOptions,
    seed: u64,
) -> Result<ImputationResult> {
    let frame = Frame::build(m, opts)?;
    let q = frame.n_cols();
    if q < 2 {
        return Err(Error::InvalidArgument("missForest needs at least two analysis columns".into()));
    }
    for &j in &frame.targets {
        let observed = frame.observed_rows(j).len();
        if observed < 2 {
            return Err(Error::InsufficientObservations {
                column: frame.names[j].clone(),
                observed,
                needed: 2,
            });
        }
    }
    let constant = (0..q).all(|j| {
        let c = frame.x.column(j);
        c.iter().all(|v| *v == c[0])
    });
    if constant {
        return Err(Error::InvalidArgument("degenerate forest: every column is constant".into()));
    }

    let mut order = frame.targets.clone();
    order.sort_by_key(|&j| frame.missing_rows(j).len());

    let mut cols: Vec<Vec<f64>> = (0..q).map(|j| frame.x.column(j).iter().copied().collect()).collect();
    let mut delta_old = f64::INFINITY;
    let mut diagnostics = Diagnostics::default();
    let max_rounds = cfg.max_rounds.max(1);

    for round in 0..max_rounds {
        let before = cols.clone();
        for &j in &order {
            let train = frame.observed_rows(j);
            let missing = frame.missing_rows(j);
            let predictors: Vec<Vec<f64>> = (0..q).filter(|&c| c != j).map(|c| cols[c].clone()).collect();
            let unit = (round * q + j) as u64;
            let forest = RegressionForest::fit(&predictors, &cols[j], &train, cfg, seed::child_seed(seed, unit))?;
            for &i in &missing {
                cols[j][i] = forest.predict_row(&predictors, i);
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for &j in &frame.targets {
            for (a, b) in cols[j].iter().zip(&before[j]) {
                num += (a - b) * (a - b);
                den += a * a;
            }
        }
        let delta = if den > 0.0 { num / den } else { 0.0 };
        diagnostics.deltas.push(delta);
        diagnostics.iterations = round + 1;
        if delta > delta_old {
            // The previous sweep is the answer.
            cols = before;
            diagnostics.converged = true;
            break;
        }
        delta_old = delta;
    }

    let x = nalgebra::DMatrix::from_fn(frame.n_rows(), q, |i, j| cols[j][i]);
    Ok(ImputationResult {
        completed: frame.write_back(m, &x),
        method: "missforest".into(),
        seed,
        diagnostics,
    })
}
