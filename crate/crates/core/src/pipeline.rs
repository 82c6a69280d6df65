//! End-to-end benchmark: select features, inject replicates, impute with
//! every configured method, score against ground truth, fit imputability
//! lines and validate NIPALS-based predictions.
//!
//! Artifact tree under the configured output directory:
//!
//! ```text
//! ground_truth.csv  schema.txt  config.txt  selection.csv
//! pca_loadings.csv  pca_explained.csv
//! replicates/rep_00/{masked.csv, mask.csv, nipals_loadings.csv,
//!                    completed_<method>.csv, diagnostics_<method>.json}
//! r2_tidy.csv  aggregate.json  summary.json
//! plots/{figure1.csv, figure2.csv, figure2.json, figure3.csv, figure3.json}
//! ```
//!
//! Every stochastic step draws its seed from
//! [`derive_seed`](crate::seed::derive_seed) on (master seed, stage,
//! replicate, method), so the replicate × method cells can run in any order
//! on any number of threads and still give the same bytes.
//!
//! Synthetic input keeps its own spec seed: the base dataset stands in for a
//! fixed cohort, and the master seed varies only masks and imputations.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CalibrationChoice, InputSource, PipelineConfig};
use crate::data::{self, CsvOptions, DataMatrix, Role, Schema};
use crate::error::{Error, Result};
use crate::evaluate::{self, AggregateReport, R2Report};
use crate::impute::{self, MethodSpec};
use crate::imputability::{self, Calibration, ImputabilityReport, OlsFit};
use crate::missingness;
use crate::pca::{self, NipalsConfig};
use crate::seed::derive_seed;
use crate::select::{self, IgScore};
use crate::synth::{self, LatentSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Methods whose complete-data fits are reported, as in the reference study.
pub const FIT_METHODS: [&str; 2] = ["missforest", "pmm"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub variables: Vec<String>,
    pub pc1: Vec<f64>,
    pub explained: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSummary {
    pub replicate: usize,
    pub seed: u64,
    pub realized_rate: f64,
}

/// One method's bars in the grouped-bar figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodBars {
    pub method: String,
    pub overall_mean: f64,
    pub overall_min: f64,
    pub overall_max: f64,
    pub best_feature: String,
    pub best_r2: f64,
    pub worst_feature: String,
    pub worst_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteFit {
    pub method: String,
    pub report: ImputabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateValidation {
    pub replicate: usize,
    pub method: String,
    pub fit: OlsFit,
    pub spearman: f64,
    pub report: ImputabilityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub seed: u64,
    /// Canonical configuration, without the output directory.
    pub config: String,
    pub n_rows: usize,
    pub features: Vec<String>,
    pub selection: Vec<IgScore>,
    pub complete_pca: PcaSummary,
    pub injections: Vec<InjectionSummary>,
    pub reports: Vec<R2Report>,
    pub aggregate: AggregateReport,
    pub bars: Vec<MethodBars>,
    pub complete_fits: Vec<CompleteFit>,
    pub validations: Vec<ReplicateValidation>,
}

impl Summary {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn complete_fit(&self, method: &str) -> Option<&CompleteFit> {
        self.complete_fits.iter().find(|f| f.method == method)
    }
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Load or generate the base dataset named by the config.
pub fn load_input(cfg: &PipelineConfig) -> Result<DataMatrix> {
    match &cfg.input {
        InputSource::Synth { spec, rows } => {
            let mut spec = match spec {
                Some(path) => LatentSpec::load(path)?,
                None => synth::default_cohort_analog(),
            };
            if let Some(n) = rows {
                spec.n_rows = *n;
            }
            synth::generate(&spec)
        }
        InputSource::Csv {
            data,
            schema,
            missing_token,
            delimiter,
        } => {
            let schema = Schema::load(schema)?;
            let opts = CsvOptions {
                delimiter: *delimiter,
                missing_token: missing_token.clone(),
            };
            data::load_csv(data, &schema, &opts)
        }
    }
}

/// Keep the `k` features with the highest information gain about the class,
/// plus every non-feature column, in original column order.
pub fn select_base(m: &DataMatrix, class: &str, k: usize, bins: usize) -> Result<(DataMatrix, Vec<IgScore>)> {
    let scores = select::score_features(m, class, bins)?;
    let top = select::top_k(&scores, k)?;
    let keep: Vec<String> = m
        .columns()
        .iter()
        .filter(|c| c.role != Role::Feature || top.iter().any(|s| s.feature == c.name))
        .map(|c| c.name.clone())
        .collect();
    Ok((m.select(&keep)?, top))
}

fn check_columns(cfg: &PipelineConfig, m: &DataMatrix) -> Result<()> {
    for (name, role) in [(&cfg.class, Role::Class), (&cfg.driver, Role::Driver)] {
        let col = m.column(name)?;
        if col.role != role {
            return Err(Error::Schema(format!("column '{name}' has role {}, expected {role}", col.role)));
        }
    }
    Ok(())
}

/// Best and worst features by mean R², ties going to the earlier column.
fn bars(agg: &AggregateReport) -> Vec<MethodBars> {
    agg.methods
        .iter()
        .filter(|m| !m.per_feature_mean.is_empty())
        .map(|m| {
            let mut best = &m.per_feature_mean[0];
            let mut worst = &m.per_feature_mean[0];
            for f in &m.per_feature_mean[1..] {
                if f.r2 > best.r2 {
                    best = f;
                }
                if f.r2 < worst.r2 {
                    worst = f;
                }
            }
            MethodBars {
                method: m.method.clone(),
                overall_mean: m.mean,
                overall_min: m.min,
                overall_max: m.max,
                best_feature: best.feature.clone(),
                best_r2: best.r2,
                worst_feature: worst.feature.clone(),
                worst_r2: worst.r2,
            }
        })
        .collect()
}

fn rep_dir(out: &Path, r: usize) -> PathBuf {
    out.join("replicates").join(format!("rep_{r:02}"))
}

/// Run the full benchmark, writing the artifact tree and returning the summary.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Summary> {
    let master = cfg
        .seed
        .ok_or_else(|| Error::InvalidArgument("the pipeline needs an explicit seed".into()))?;
    cfg.validate()?;
    let methods = cfg.method_specs()?;
    let out = cfg.output.as_path();
    mkdir(out)?;
    let csv = CsvOptions::default();

    let raw = load_input(cfg).map_err(|e| e.at_stage("input", None))?;
    check_columns(cfg, &raw).map_err(|e| e.at_stage("input", None))?;
    let (base, selection) =
        select_base(&raw, &cfg.class, cfg.select_k, cfg.bins).map_err(|e| e.at_stage("select", None))?;
    let features = base.names_with_role(Role::Feature);
    data::save_csv(&base, out.join("ground_truth.csv"), &csv)?;
    Schema::of(&base).save(out.join("schema.txt"))?;
    write_text(&config_text(cfg), &out.join("config.txt"))?;
    write_selection_csv(&selection, &out.join("selection.csv"))?;

    let analysis = impute::analysis_names(&base, &cfg.impute);
    let complete_pca = pca::pca_correlation(&base.select(&analysis)?).map_err(|e| e.at_stage("pca", None))?;
    complete_pca.write_loadings_csv(out.join("pca_loadings.csv"))?;
    complete_pca.write_explained_csv(out.join("pca_explained.csv"))?;

    let inject_spec = cfg.missingness_spec(derive_seed(master, "inject", 0, ""));
    let injections =
        missingness::replicate(&base, &inject_spec, cfg.replicates).map_err(|e| e.at_stage("inject", None))?;
    for (r, inj) in injections.iter().enumerate() {
        let dir = rep_dir(out, r);
        mkdir(&dir)?;
        data::save_csv(&inj.data, dir.join("masked.csv"), &csv)?;
        data::save_mask_csv(&inj.data, dir.join("mask.csv"), &csv)?;
    }

    let jobs: Vec<(usize, &MethodSpec)> = (0..cfg.replicates)
        .flat_map(|r| methods.iter().map(move |m| (r, m)))
        .collect();
    let reports: Vec<R2Report> = jobs
        .par_iter()
        .map(|&(r, spec)| {
            let name = spec.name();
            let stage = format!("impute:{name}");
            let masked = &injections[r].data;
            let seed = derive_seed(master, "impute", r, name);
            let result = impute::impute(masked, spec, &cfg.impute, seed).map_err(|e| e.at_stage(&stage, Some(r)))?;
            let dir = rep_dir(out, r);
            data::save_csv(&result.completed, dir.join(format!("completed_{name}.csv")), &csv)?;
            write_json(&result.diagnostics, &dir.join(format!("diagnostics_{name}.json")))?;
            evaluate::evaluate(&result.completed, &base, masked, name, r).map_err(|e| e.at_stage("evaluate", Some(r)))
        })
        .collect::<Result<_>>()?;
    evaluate::write_tidy_csv(&reports, out.join("r2_tidy.csv"))?;
    let aggregate = evaluate::aggregate(&reports);
    write_json(&aggregate, &out.join("aggregate.json"))?;

    let complete_fits: Vec<CompleteFit> = FIT_METHODS
        .iter()
        .filter_map(|&name| aggregate.method(name))
        .map(|agg| {
            let pf: Vec<(String, f64)> = agg.per_feature_mean.iter().map(|f| (f.feature.clone(), f.r2)).collect();
            imputability::fit_imputability(&pf, &complete_pca)
                .map(|report| CompleteFit {
                    method: agg.method.clone(),
                    report,
                })
                .map_err(|e| e.at_stage("fit", None))
        })
        .collect::<Result<_>>()?;

    let calibration: Option<Calibration> = match cfg.calibration {
        CalibrationChoice::Complete => complete_fits
            .iter()
            .find(|f| f.method == cfg.validate_method)
            .and_then(|f| f.report.calibration),
        CalibrationChoice::Fixed(c) => Some(c),
        CalibrationChoice::None => None,
    };
    let validations: Vec<ReplicateValidation> = if methods.iter().any(|m| m.name() == cfg.validate_method) {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                validate_replicate(&injections[r].data, &analysis, &features, &reports, r, &cfg.validate_method, calibration)
                    .and_then(|(nip, v)| {
                        nip.write_loadings_csv(rep_dir(out, r).join("nipals_loadings.csv"))?;
                        Ok(v)
                    })
                    .map_err(|e| e.at_stage("validate", Some(r)))
            })
            .collect::<Result<_>>()?
    } else {
        log::warn!("validation method '{}' not among configured methods; skipping", cfg.validate_method);
        Vec::new()
    };

    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        seed: master,
        config: config_text(cfg),
        n_rows: base.n_rows(),
        features,
        selection,
        complete_pca: PcaSummary {
            variables: complete_pca.variables.clone(),
            pc1: complete_pca.loadings.column(0).iter().copied().collect(),
            explained: complete_pca.explained.clone(),
        },
        injections: injections
            .iter()
            .enumerate()
            .map(|(r, inj)| InjectionSummary {
                replicate: r,
                seed: inj.seed,
                realized_rate: inj.realized_rate,
            })
            .collect(),
        bars: bars(&aggregate),
        reports,
        aggregate,
        complete_fits,
        validations,
    };
    write_json(&summary, &out.join("summary.json"))?;
    emit_plot_data(&summary, &out.join("plots"))?;
    Ok(summary)
}

/// NIPALS PC1 on the standardized masked analysis columns, ranked and
/// checked against one method's per-feature R² for that replicate.
fn validate_replicate(
    masked: &DataMatrix,
    analysis: &[String],
    features: &[String],
    reports: &[R2Report],
    replicate: usize,
    method: &str,
    calibration: Option<Calibration>,
) -> Result<(pca::PcaModel, ReplicateValidation)> {
    let z = data::standardize(&masked.select(analysis)?)?;
    let nip = pca::nipals(&z, &NipalsConfig::with_k(1))?;
    let prediction = imputability::predict_imputability(&nip, features, calibration)?;
    let report = reports
        .iter()
        .find(|r| r.replicate == replicate && r.method == method)
        .ok_or_else(|| Error::InvalidArgument(format!("no '{method}' report for replicate {replicate}")))?;
    let observed: Vec<(String, f64)> = report.per_feature.iter().map(|f| (f.feature.clone(), f.r2)).collect();
    let prediction = restrict(&prediction, &observed);
    let v = imputability::validate_prediction(&prediction, &observed)?;
    Ok((
        nip,
        ReplicateValidation {
            replicate,
            method: method.to_owned(),
            fit: v.fit,
            spearman: v.spearman,
            report: v.report,
        },
    ))
}

/// Drop predicted features that have no observed R² (too few masked cells).
fn restrict(report: &ImputabilityReport, observed: &[(String, f64)]) -> ImputabilityReport {
    let mut out = report.clone();
    out.features.retain(|f| observed.iter().any(|(n, _)| *n == f.feature));
    out
}

fn config_text(cfg: &PipelineConfig) -> String {
    cfg.to_text()
        .lines()
        .filter(|l| !l.starts_with("output ="))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn write_selection_csv(scores: &[IgScore], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["feature", "gain"])?;
    for s in scores {
        w.write_record([s.feature.clone(), format!("{}", s.gain)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct LineSidecar<'a> {
    method: &'a str,
    replicate: Option<usize>,
    slope: f64,
    intercept: f64,
    fit_r2: f64,
    p_value: f64,
    spearman: Option<f64>,
}

/// Plain CSV tables for the three figure analogs, plus JSON sidecars with
/// the fitted lines. Returns the paths written.
pub fn emit_plot_data(summary: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    mkdir(dir)?;
    let mut written = Vec::new();

    let fig1 = dir.join("figure1.csv");
    {
        let f = std::fs::File::create(&fig1).map_err(|e| Error::io(&fig1, e))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["method", "group", "feature", "r2", "min", "max"])?;
        for b in &summary.bars {
            w.write_record([
                b.method.clone(),
                "overall".into(),
                "ALL".into(),
                format!("{}", b.overall_mean),
                format!("{}", b.overall_min),
                format!("{}", b.overall_max),
            ])?;
            w.write_record([b.method.clone(), "best".into(), b.best_feature.clone(), format!("{}", b.best_r2), String::new(), String::new()])?;
            w.write_record([b.method.clone(), "worst".into(), b.worst_feature.clone(), format!("{}", b.worst_r2), String::new(), String::new()])?;
        }
        w.flush().map_err(|e| Error::io(&fig1, e))?;
    }
    written.push(fig1);

    if let Some(fit) = summary.complete_fits.first() {
        let fig2 = dir.join("figure2.csv");
        imputability::write_scatter_csv(&fit.report, &fig2)?;
        written.push(fig2);
        if fit.report.fit.is_some() {
            let side = dir.join("figure2.json");
            let sidecars: Vec<LineSidecar> = summary
                .complete_fits
                .iter()
                .filter_map(|f| {
                    f.report.fit.map(|l| LineSidecar {
                        method: &f.method,
                        replicate: None,
                        slope: l.slope,
                        intercept: l.intercept,
                        fit_r2: l.fit_r2,
                        p_value: l.p_value,
                        spearman: None,
                    })
                })
                .collect();
            write_json(&sidecars, &side)?;
            written.push(side);
        }
    }

    if !summary.validations.is_empty() {
        let fig3 = dir.join("figure3.csv");
        {
            let f = std::fs::File::create(&fig3).map_err(|e| Error::io(&fig3, e))?;
            let mut w = csv::Writer::from_writer(f);
            w.write_record(["replicate", "feature", "abs_pc1", "r2", "residual"])?;
            for v in &summary.validations {
                for f in &v.report.features {
                    w.write_record([
                        v.replicate.to_string(),
                        f.feature.clone(),
                        format!("{}", f.abs_pc1),
                        f.observed_r2.map(|x| format!("{x}")).unwrap_or_default(),
                        f.residual.map(|x| format!("{x}")).unwrap_or_default(),
                    ])?;
                }
            }
            w.flush().map_err(|e| Error::io(&fig3, e))?;
        }
        written.push(fig3);
        let side = dir.join("figure3.json");
        let sidecars: Vec<LineSidecar> = summary
            .validations
            .iter()
            .map(|v| LineSidecar {
                method: &v.method,
                replicate: Some(v.replicate),
                slope: v.fit.slope,
                intercept: v.fit.intercept,
                fit_r2: v.fit.fit_r2,
                p_value: v.fit.p_value,
                spearman: Some(v.spearman),
            })
            .collect();
        write_json(&sidecars, &side)?;
        written.push(side);
    }
    Ok(written)
}
