//! Feature imputability from PC1 loadings.
//!
//! Per-feature imputation R² is regressed on the absolute PC1 loading of
//! each feature. The fitted line then turns loadings computed without any
//! ground truth (NIPALS on the incomplete data) into predicted R².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pca::{PcaMethod, PcaModel};
use crate::special::student_t_two_sided;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    /// Squared correlation of x and y.
    pub fit_r2: f64,
    /// Two-sided t-test on the slope, n − 2 degrees of freedom. 1 for a
    /// constant response, 0 for an exact non-flat fit.
    pub p_value: f64,
    pub n_points: usize,
}

/// Ordinary least squares of y on x.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<OlsFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("OLS needs at least 3 points, got {n}")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (mx, my) = (stats::mean(&xs), stats::mean(&ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("OLS regressor is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if syy == 0.0 {
        return Ok(OlsFit {
            slope: 0.0,
            intercept: my,
            fit_r2: 0.0,
            p_value: 1.0,
            n_points: n,
        });
    }
    let fit_r2 = (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0);
    let df = (n - 2) as f64;
    let sse = (syy - slope * sxy).max(0.0);
    let p_value = if sse == 0.0 {
        0.0
    } else {
        let se = (sse / df / sxx).sqrt();
        student_t_two_sided(slope / se, df)
    };
    Ok(OlsFit {
        slope,
        intercept,
        fit_r2,
        p_value,
        n_points: n,
    })
}

/// A line mapping |PC1| to expected imputation R².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub slope: f64,
    pub intercept: f64,
}

impl Calibration {
    /// The line published for missForest on the clinical cohort.
    pub const PUBLISHED: Calibration = Calibration {
        slope: 1.9,
        intercept: 0.19,
    };

    /// Predicted R², clamped to [0, 1].
    pub fn predict(&self, abs_loading: f64) -> f64 {
        (self.slope * abs_loading + self.intercept).clamp(0.0, 1.0)
    }
}

impl From<OlsFit> for Calibration {
    fn from(f: OlsFit) -> Self {
        Calibration {
            slope: f.slope,
            intercept: f.intercept,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadingSource {
    CompleteDataPca,
    NipalsOnMissing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImputability {
    pub feature: String,
    pub abs_pc1: f64,
    pub observed_r2: Option<f64>,
    pub predicted_r2: Option<f64>,
    /// observed − fitted, when both exist.
    pub residual: Option<f64>,
    /// 1 = most imputable by |PC1|.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputabilityReport {
    pub source: LoadingSource,
    pub features: Vec<FeatureImputability>,
    pub fit: Option<OlsFit>,
    pub calibration: Option<Calibration>,
}

impl ImputabilityReport {
    pub fn feature(&self, name: &str) -> Option<&FeatureImputability> {
        self.features.iter().find(|f| f.feature == name)
    }
}

fn abs_pc1(pca: &PcaModel, feature: &str) -> Result<f64> {
    if pca.n_components() == 0 {
        return Err(Error::InvalidArgument("PCA model has no components".into()));
    }
    let j = pca
        .variable_index(feature)
        .ok_or_else(|| Error::FeatureMismatch(format!("'{feature}' has no PC1 loading")))?;
    Ok(pca.loadings[(j, 0)].abs())
}

/// Ranks by |PC1| descending; ties keep input order.
fn ranks(abs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[b].total_cmp(&abs[a]));
    let mut rank = vec![0; abs.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    rank
}

/// Regress observed per-feature R² on |PC1| from a complete-data PCA.
pub fn fit_imputability(per_feature_r2: &[(String, f64)], pca: &PcaModel) -> Result<ImputabilityReport> {
    if per_feature_r2.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 scored features".into()));
    }
    let abs: Vec<f64> = per_feature_r2
        .iter()
        .map(|(f, _)| abs_pc1(pca, f))
        .collect::<Result<_>>()?;
    let points: Vec<(f64, f64)> = abs.iter().zip(per_feature_r2).map(|(&x, (_, y))| (x, *y)).collect();
    let fit = ols_fit(&points)?;
    let line = Calibration::from(fit);
    let rank = ranks(&abs);
    let features = per_feature_r2
        .iter()
        .enumerate()
        .map(|(i, (name, r2))| {
            let fitted = fit.slope * abs[i] + fit.intercept;
            FeatureImputability {
                feature: name.clone(),
                abs_pc1: abs[i],
                observed_r2: Some(*r2),
                predicted_r2: Some(line.predict(abs[i])),
                residual: Some(r2 - fitted),
                rank: rank[i],
            }
        })
        .collect();
    let source = match pca.method {
        PcaMethod::Nipals => LoadingSource::NipalsOnMissing,
        _ => LoadingSource::CompleteDataPca,
    };
    Ok(ImputabilityReport {
        source,
        features,
        fit: Some(fit),
        calibration: Some(line),
    })
}

/// Rank `features` by |PC1| from a model fitted without ground truth, and
/// predict R² when a calibration line is supplied.
pub fn predict_imputability(
    pca: &PcaModel,
    features: &[String],
    calibration: Option<Calibration>,
) -> Result<ImputabilityReport> {
    if features.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 features".into()));
    }
    let abs: Vec<f64> = features.iter().map(|f| abs_pc1(pca, f)).collect::<Result<_>>()?;
    let rank = ranks(&abs);
    let features = features
        .iter()
        .enumerate()
        .map(|(i, name)| FeatureImputability {
            feature: name.clone(),
            abs_pc1: abs[i],
            observed_r2: None,
            predicted_r2: calibration.map(|c| c.predict(abs[i])),
            residual: None,
            rank: rank[i],
        })
        .collect();
    Ok(ImputabilityReport {
        source: LoadingSource::NipalsOnMissing,
        features,
        fit: None,
        calibration,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    /// Observed R² regressed on |PC1| of the prediction report.
    pub fit: OlsFit,
    /// Spearman correlation of |PC1| with observed R².
    pub spearman: f64,
    pub report: ImputabilityReport,
}

/// Compare a ground-truth-free prediction with observed per-feature R².
pub fn validate_prediction(report: &ImputabilityReport, observed: &[(String, f64)]) -> Result<Validation> {
    let mut points = Vec::new();
    let mut out = report.clone();
    for f in out.features.iter_mut() {
        let (_, r2) = observed
            .iter()
            .find(|(n, _)| *n == f.feature)
            .ok_or_else(|| Error::FeatureMismatch(format!("no observed R² for '{}'", f.feature)))?;
        f.observed_r2 = Some(*r2);
        points.push((f.abs_pc1, *r2));
    }
    if observed.len() != report.features.len() {
        return Err(Error::FeatureMismatch(format!(
            "{} observed features vs {} predicted",
            observed.len(),
            report.features.len()
        )));
    }
    let fit = ols_fit(&points)?;
    for f in out.features.iter_mut() {
        let fitted = fit.slope * f.abs_pc1 + fit.intercept;
        f.residual = f.observed_r2.map(|o| o - fitted);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let spearman = stats::spearman(&xs, &ys).unwrap_or(0.0);
    Ok(Validation {
        fit,
        spearman,
        report: out,
    })
}

/// Scatter table: feature, |PC1|, observed R², predicted R², residual.
pub fn write_scatter_csv(report: &ImputabilityReport, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["feature", "abs_pc1", "r2", "predicted_r2", "residual", "rank"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for f in &report.features {
        w.write_record([
            f.feature.clone(),
            format!("{}", f.abs_pc1),
            opt(f.observed_r2),
            opt(f.predicted_r2),
            opt(f.residual),
            f.rank.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
