//! Probabilistic PCA fitted by EM with missing coordinates.
//!
//! Model: x = W z + μ + ε, z ~ N(0, I_k), ε ~ N(0, σ² I). The E-step takes
//! expectations over the latent z (posterior given the observed coordinates
//! of each row) and over the missing coordinates given z. The M-step solves
//! for each row of [W | μ] jointly and then for σ². Each iteration is a full
//! EM step, so the observed-data log-likelihood never decreases.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Standardizer};
use crate::error::{Error, Result};
use crate::seed;

use super::{Diagnostics, Frame, ImputationResult, ImputeOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcaConfig {
    /// Latent dimension; 0 selects it by cross-validation when dispatched through `impute`.
    pub k: usize,
    pub max_iter: usize,
    /// Convergence threshold on the relative log-likelihood change.
    pub tol: f64,
    /// Lower bound on σ².
    pub sigma2_floor: f64,
}

impl Default for PpcaConfig {
    fn default() -> Self {
        PpcaConfig {
            k: super::DEFAULT_COMPONENTS,
            max_iter: 5000,
            tol: 1e-7,
            sigma2_floor: 1e-10,
        }
    }
}

/// Fitted parameters plus the EM trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PpcaFit {
    /// p × k.
    pub w: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub sigma2: f64,
    pub log_likelihood: Vec<f64>,
    /// n × k posterior means of z.
    pub latent: DMatrix<f64>,
    pub converged: bool,
}

impl PpcaFit {
    /// Posterior-mean reconstruction of cell (i, j).
    pub fn reconstruct(&self, i: usize, j: usize) -> f64 {
        self.mu[j] + self.w.row(j).dot(&self.latent.row(i))
    }
}

struct Posterior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// E-step for one row: posterior of z given its observed coordinates, plus
/// that row's observed-data log-likelihood.
fn posterior(
    x: &DMatrix<f64>,
    observed: &[Vec<bool>],
    i: usize,
    w: &DMatrix<f64>,
    mu: &DVector<f64>,
    sigma2: f64,
) -> Result<(Posterior, f64)> {
    let (p, k) = w.shape();
    let mut m = DMatrix::<f64>::identity(k, k) * sigma2;
    let mut b = DVector::<f64>::zeros(k);
    let mut ss = 0.0;
    let mut n_obs = 0usize;
    for j in 0..p {
        if observed[j][i] {
            let wj = w.row(j).transpose();
            let r = x[(i, j)] - mu[j];
            m += &wj * wj.transpose();
            b += &wj * r;
            ss += r * r;
            n_obs += 1;
        }
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("PPCA posterior (row {i})")))?;
    let mean = chol.solve(&b);
    let cov = chol.inverse() * sigma2;
    // Woodbury form of log N(x_o | μ_o, W_o W_oᵀ + σ² I).
    let log_det_m: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_det_c = (n_obs as f64 - k as f64) * sigma2.ln() + log_det_m;
    let quad = (ss - b.dot(&mean)) / sigma2;
    let ll = -0.5 * (n_obs as f64 * (2.0 * std::f64::consts::PI).ln() + log_det_c + quad);
    Ok((Posterior { mean, cov }, ll))
}

/// Fit PPCA on dense data whose missing cells are flagged by `observed[j][i]`.
/// Values at missing cells are ignored.
pub fn fit_ppca(x: &DMatrix<f64>, observed: &[Vec<bool>], cfg: &PpcaConfig, seed: u64) -> Result<PpcaFit> {
    let (n, p) = x.shape();
    let k = cfg.k;
    if k == 0 || k >= p {
        return Err(Error::InvalidArgument(format!("PPCA needs 1 ≤ k < {p}, got {k}")));
    }
    if cfg.max_iter == 0 || !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument("PPCA needs max_iter ≥ 1 and tol > 0".into()));
    }
    let mut rng = seed::rng(seed);
    let mut w = DMatrix::from_fn(p, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut mu = DVector::from_fn(p, |j, _| {
        let (s, c) = (0..n)
            .filter(|&i| observed[j][i])
            .fold((0.0, 0usize), |(s, c), i| (s + x[(i, j)], c + 1));
        if c > 0 {
            s / c as f64
        } else {
            0.0
        }
    });
    let mut sigma2: f64 = 1.0;

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut latent = DMatrix::zeros(n, k);
    for _ in 0..cfg.max_iter {
        // E-step
        let mut posts = Vec::with_capacity(n);
        let mut ll = 0.0;
        for i in 0..n {
            let (post, lli) = posterior(x, observed, i, &w, &mu, sigma2)?;
            ll += lli;
            posts.push(post);
        }
        if let Some(&prev) = trace.last() {
            let rel = (ll - prev).abs() / prev.abs().max(1e-300);
            trace.push(ll);
            if rel < cfg.tol {
                converged = true;
                for (i, post) in posts.iter().enumerate() {
                    latent.set_row(i, &post.mean.transpose());
                }
                break;
            }
        } else {
            trace.push(ll);
        }

        // Second moments of z̃ = [z; 1] per row and their sum.
        let moments: Vec<DMatrix<f64>> = posts
            .iter()
            .map(|post| {
                let mut a = DMatrix::zeros(k + 1, k + 1);
                let zz = &post.cov + &post.mean * post.mean.transpose();
                a.view_mut((0, 0), (k, k)).copy_from(&zz);
                for c in 0..k {
                    a[(c, k)] = post.mean[c];
                    a[(k, c)] = post.mean[c];
                }
                a[(k, k)] = 1.0;
                a
            })
            .collect();
        let a_sum = moments.iter().fold(DMatrix::zeros(k + 1, k + 1), |acc, a| acc + a);
        let a_chol = a_sum
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("PPCA M-step".into()))?;

        // M-step for each row of [W | μ].
        let mut theta_new = DMatrix::zeros(p, k + 1);
        let mut theta_old = DMatrix::zeros(p, k + 1);
        for j in 0..p {
            let old = DVector::from_iterator(k + 1, w.row(j).iter().copied().chain(std::iter::once(mu[j])));
            let mut rhs = DVector::zeros(k + 1);
            for (i, post) in posts.iter().enumerate() {
                if observed[j][i] {
                    for c in 0..k {
                        rhs[c] += post.mean[c] * x[(i, j)];
                    }
                    rhs[k] += x[(i, j)];
                } else {
                    // E[z̃ x_ij] = E[z̃ z̃ᵀ] θ_old for a missing coordinate.
                    rhs += &moments[i] * &old;
                }
            }
            theta_new.set_row(j, &a_chol.solve(&rhs).transpose());
            theta_old.set_row(j, &old.transpose());
        }

        // σ² from the expected residual energy under the new parameters.
        let mut energy = 0.0;
        for j in 0..p {
            let tn = theta_new.row(j).transpose();
            let delta = theta_old.row(j).transpose() - &tn;
            for (i, post) in posts.iter().enumerate() {
                if observed[j][i] {
                    let wn = tn.rows(0, k);
                    let r = x[(i, j)] - wn.dot(&post.mean) - tn[k];
                    energy += r * r + (wn.transpose() * &post.cov * wn)[(0, 0)];
                } else {
                    energy += sigma2 + (delta.transpose() * &moments[i] * &delta)[(0, 0)];
                }
            }
        }
        sigma2 = (energy / (n * p) as f64).max(cfg.sigma2_floor);
        w = theta_new.columns(0, k).into_owned();
        mu = theta_new.column(k).into_owned();
    }

    if !converged {
        for i in 0..n {
            let (post, _) = posterior(x, observed, i, &w, &mu, sigma2)?;
            latent.set_row(i, &post.mean.transpose());
        }
    }
    Ok(PpcaFit {
        w,
        mu,
        sigma2,
        log_likelihood: trace,
        latent,
        converged,
    })
}

/// Impute feature cells with the PPCA posterior-mean reconstruction, fitted on
/// the standardized analysis columns and mapped back to the original scale.
pub fn impute_ppca(m: &DataMatrix, cfg: &PpcaConfig, opts: &ImputeOptions, seed: u64) -> Result<ImputationResult> {
    let frame = Frame::build(m, opts)?;
    let sub = m.select(&frame.names)?;
    let scaler = Standardizer::fit(&sub)?;
    let (z, _) = scaler.apply(&sub).to_dense();
    let fit = fit_ppca(&z, &frame.observed, cfg, seed)?;
    if !fit.converged {
        let delta = match fit.log_likelihood.as_slice() {
            [.., a, b] => (b - a).abs() / a.abs(),
            _ => f64::NAN,
        };
        return Err(Error::EmNonConvergence {
            method: "ppca",
            iterations: cfg.max_iter,
            delta,
            trace: fit.log_likelihood,
        });
    }
    let x = DMatrix::from_fn(frame.n_rows(), frame.n_cols(), |i, j| {
        fit.reconstruct(i, j) * scaler.sds[j] + scaler.means[j]
    });
    let deltas = fit
        .log_likelihood
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / w[0].abs())
        .collect();
    Ok(ImputationResult {
        completed: frame.write_back(m, &x),
        method: "ppca".into(),
        seed,
        diagnostics: Diagnostics {
            iterations: fit.log_likelihood.len(),
            deltas,
            log_likelihood: fit.log_likelihood,
            components: Some(cfg.k),
            converged: true,
        },
    })
}
