use nalgebra::DMatrix;

use crate::data::{DataMatrix, Standardizer};
use crate::error::Result;
use crate::pca::{nipals, NipalsConfig};

use super::{Diagnostics, Frame, ImputationResult, ImputeOptions};

/// Fill feature cells with the rank-`k` NIPALS reconstruction of the
/// standardized analysis columns, mapped back to the original scale.
/// `k = 0` reconstructs nothing, which reduces to mean imputation.
pub fn impute_nipals(m: &DataMatrix, k: usize, opts: &ImputeOptions) -> Result<ImputationResult> {
    let frame = Frame::build(m, opts)?;
    let sub = m.select(&frame.names)?;
    let scaler = Standardizer::fit(&sub)?;
    let (model, iterations) = if k == 0 {
        (None, 0)
    } else {
        let model = nipals(&scaler.apply(&sub), &NipalsConfig::with_k(k))?;
        let iters = model.iterations.iter().sum();
        (Some(model), iters)
    };
    let x = DMatrix::from_fn(frame.n_rows(), frame.n_cols(), |i, j| {
        let z = model.as_ref().map_or(0.0, |md| md.reconstruct(i, j, k));
        z * scaler.sds[j] + scaler.means[j]
    });
    Ok(ImputationResult {
        completed: frame.write_back(m, &x),
        method: "nipals".into(),
        seed: 0,
        diagnostics: Diagnostics {
            iterations,
            components: Some(model.as_ref().map_or(0, |md| md.n_components())),
            converged: true,
            ..Default::default()
        },
    })
}
