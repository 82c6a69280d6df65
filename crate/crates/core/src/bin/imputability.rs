//! Command-line front end. Each subcommand reads and writes the same files
//! the pipeline produces, so any stage can be rerun on its own.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use imputability::config::PipelineConfig;
use imputability::data::{self, CsvOptions, DataMatrix, Schema};
use imputability::evaluate::{self, R2Report};
use imputability::imputability::{self as imp, Calibration, ImputabilityReport};
use imputability::pca::{self, NipalsConfig, PcaModel};
use imputability::pipeline::{self, Summary};
use imputability::synth::{self, LatentSpec};
use imputability::{impute, missingness, select, Error, Result};

#[derive(Parser)]
#[command(name = "imputability", version, about = "Missing-data benchmarking and feature imputability prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// A CSV plus the schema naming each column's role.
#[derive(Args, Clone)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Schema file (`name = role` lines). Defaults to schema.txt beside the data.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Token marking a missing cell.
    #[arg(long, default_value = "NA")]
    missing_token: String,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

impl DataArgs {
    fn csv_options(&self) -> Result<CsvOptions> {
        if !self.delimiter.is_ascii() {
            return Err(Error::InvalidArgument(format!("delimiter '{}' is not ASCII", self.delimiter)));
        }
        Ok(CsvOptions {
            delimiter: self.delimiter as u8,
            missing_token: self.missing_token.clone(),
        })
    }

    fn schema_path(&self) -> PathBuf {
        self.schema.clone().unwrap_or_else(|| sibling(&self.data, "schema.txt"))
    }

    fn load(&self) -> Result<DataMatrix> {
        load_with(&self.data, &self.schema_path(), &self.csv_options()?)
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn load_with(path: &Path, schema: &Path, opts: &CsvOptions) -> Result<DataMatrix> {
    data::load_csv(path, &Schema::load(schema)?, opts)
}

#[derive(Clone, Copy, ValueEnum)]
enum PcaKind {
    Eigen,
    Nipals,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a latent-factor dataset with known ground truth.
    Synth {
        /// Spec file; the built-in cohort analog when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        rows: Option<usize>,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "synth-out")]
        out: PathBuf,
    },
    /// Rank features by information gain about the class column.
    SelectFeatures {
        #[command(flatten)]
        input: DataArgs,
        #[arg(long, default_value = synth::ANALOG_CLASS)]
        class: String,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = select::DEFAULT_BINS)]
        bins: usize,
        /// Ranked (feature, gain) table.
        #[arg(long, default_value = "selection.csv")]
        out: PathBuf,
        /// Also write the dataset reduced to the selected features, with its schema.
        #[arg(long)]
        data_out: Option<PathBuf>,
    },
    /// Mask feature cells with driver-dependent MAR missingness.
    Inject {
        #[command(flatten)]
        input: DataArgs,
        #[arg(long, default_value = synth::ANALOG_DRIVER)]
        driver: String,
        #[arg(long, default_value_t = missingness::DEFAULT_BASE_RATE)]
        base: f64,
        #[arg(long, default_value_t = missingness::DEFAULT_SLOPE)]
        slope: f64,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        /// Seed of replicate 0; replicate i uses seed + i.
        #[arg(long)]
        seed: u64,
        /// Further missingness keys, e.g. `missing.sign=+1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "inject-out")]
        out: PathBuf,
    },
    /// Fill the missing cells of one dataset.
    Impute {
        #[command(flatten)]
        input: DataArgs,
        /// mean, median, pmm, missforest, ppca or nipals.
        #[arg(long)]
        method: String,
        #[arg(long)]
        seed: u64,
        /// Component count for ppca/nipals (`auto` for cross-validation).
        #[arg(long)]
        k: Option<String>,
        /// Method settings as config keys, e.g. `pmm.m=15` or `missforest.trees=50`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Completed CSV; diagnostics go beside it as `<stem>.diagnostics.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Principal components by eigendecomposition or NIPALS.
    Pca {
        #[command(flatten)]
        input: DataArgs,
        #[arg(long, value_enum, default_value = "eigen")]
        method: PcaKind,
        /// Number of components, or `auto` (NIPALS only).
        #[arg(long, default_value = "3")]
        k: String,
        /// Comma-separated columns; defaults to the class and feature columns.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "pca-out")]
        out: PathBuf,
    },
    /// Score completed matrices against ground truth.
    Evaluate {
        /// Complete ground-truth CSV.
        #[arg(long)]
        truth: PathBuf,
        /// Schema; defaults to schema.txt beside the ground truth.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Directory of `rep_XX/{masked.csv, completed_<method>.csv}` folders.
        #[arg(long, conflicts_with_all = ["masked", "completed"])]
        replicates: Option<PathBuf>,
        #[arg(long, requires = "completed")]
        masked: Option<PathBuf>,
        #[arg(long, requires = "masked")]
        completed: Option<PathBuf>,
        #[arg(long, default_value = "method")]
        method: String,
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[arg(long, default_value = "evaluate-out")]
        out: PathBuf,
    },
    /// Rank features by |PC1| and optionally predict their imputation R².
    Predict {
        /// `variable,PC1,...` loadings table.
        #[arg(long)]
        loadings: PathBuf,
        /// Features to rank; defaults to every variable in the table.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        /// `slope,intercept` or `published`.
        #[arg(long)]
        calibration: Option<String>,
        #[arg(long, default_value = "predict-out")]
        out: PathBuf,
    },
    /// Regress observed per-feature R² on |PC1| and report rank agreement.
    Validate {
        #[arg(long)]
        loadings: PathBuf,
        /// Tidy R² table from `evaluate` or the pipeline.
        #[arg(long)]
        r2: PathBuf,
        #[arg(long)]
        method: Option<String>,
        /// Replicate to use; all rows for the method are averaged when omitted.
        #[arg(long)]
        replicate: Option<usize>,
        #[arg(long)]
        calibration: Option<String>,
        #[arg(long, default_value = "validate-out")]
        out: PathBuf,
    },
    /// Run the whole benchmark from a config file.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override any config key.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write figure tables from a pipeline summary.
    PlotData {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn parse_calibration(text: Option<&str>) -> Result<Option<Calibration>> {
    let Some(text) = text else { return Ok(None) };
    if text.trim() == "published" {
        return Ok(Some(Calibration::PUBLISHED));
    }
    let bad = || Error::InvalidArgument(format!("calibration '{text}' is not slope,intercept"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    Ok(Some(Calibration {
        slope: a.trim().parse().map_err(|_| bad())?,
        intercept: b.trim().parse().map_err(|_| bad())?,
    }))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, rows, seed, out } => {
            let mut spec = match spec {
                Some(p) => LatentSpec::load(p)?,
                None => synth::default_cohort_analog(),
            };
            if let Some(n) = rows {
                spec.n_rows = n;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let m = synth::generate(&spec)?;
            mkdir(&out)?;
            data::save_csv(&m, out.join("data.csv"), &CsvOptions::default())?;
            Schema::of(&m).save(out.join("schema.txt"))?;
            spec.save(out.join("spec.txt"))?;
            log::info!("wrote {} rows × {} columns to {}", m.n_rows(), m.n_cols(), out.display());
        }
        Command::SelectFeatures {
            input,
            class,
            k,
            bins,
            out,
            data_out,
        } => {
            let m = input.load()?;
            let (reduced, top) = pipeline::select_base(&m, &class, k, bins)?;
            let mut w = csv::Writer::from_path(&out)?;
            w.write_record(["feature", "gain"])?;
            for s in &top {
                w.write_record([s.feature.clone(), s.gain.to_string()])?;
            }
            w.flush().map_err(|e| Error::Io { path: out.clone(), source: e })?;
            if let Some(path) = data_out {
                if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    mkdir(dir)?;
                }
                data::save_csv(&reduced, &path, &input.csv_options()?)?;
                Schema::of(&reduced).save(sibling(&path, "schema.txt"))?;
            }
        }
        Command::Inject {
            input,
            driver,
            base,
            slope,
            replicates,
            seed,
            overrides,
            out,
        } => {
            let m = input.load()?;
            let mut cfg = PipelineConfig::default();
            cfg.set("driver", &driver)?;
            cfg.set("missing.base", &base.to_string())?;
            cfg.set("missing.slope", &slope.to_string())?;
            cfg.apply_overrides(&overrides)?;
            let spec = cfg.missingness_spec(seed);
            let outcomes = missingness::replicate(&m, &spec, replicates)?;
            let opts = input.csv_options()?;
            mkdir(&out)?;
            data::save_csv(&m, out.join("ground_truth.csv"), &opts)?;
            Schema::of(&m).save(out.join("schema.txt"))?;
            let mut manifest = csv::Writer::from_path(out.join("replicates.csv"))?;
            manifest.write_record(["replicate", "seed", "realized_rate"])?;
            for (r, o) in outcomes.iter().enumerate() {
                let dir = out.join(format!("rep_{r:02}"));
                mkdir(&dir)?;
                data::save_csv(&o.data, dir.join("masked.csv"), &opts)?;
                data::save_mask_csv(&o.data, dir.join("mask.csv"), &opts)?;
                Schema::of(&o.data).save(dir.join("schema.txt"))?;
                manifest.write_record([r.to_string(), o.seed.to_string(), o.realized_rate.to_string()])?;
                log::info!("replicate {r}: {:.4} of target cells masked", o.realized_rate);
            }
            manifest.flush().map_err(|e| Error::Io { path: out.clone(), source: e })?;
        }
        Command::Impute {
            input,
            method,
            seed,
            k,
            overrides,
            out,
        } => {
            let m = input.load()?;
            let mut cfg = PipelineConfig::default();
            cfg.apply_overrides(&overrides)?;
            if let Some(k) = k {
                cfg.set("ppca.k", &k)?;
                cfg.set("nipals.k", &k)?;
            }
            cfg.set("methods", &method)?;
            let spec = cfg.method_specs()?.remove(0);
            let result = impute::impute(&m, &spec, &cfg.impute, seed)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                mkdir(dir)?;
            }
            data::save_csv(&result.completed, &out, &input.csv_options()?)?;
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("completed");
            write_json(&result.diagnostics, &sibling(&out, &format!("{stem}.diagnostics.json")))?;
        }
        Command::Pca {
            input,
            method,
            k,
            columns,
            seed,
            out,
        } => {
            let m = input.load()?;
            let names = if columns.is_empty() {
                impute::analysis_names(&m, &impute::ImputeOptions::default())
            } else {
                columns
            };
            let sub = m.select(&names)?;
            let model: PcaModel = match method {
                PcaKind::Eigen => {
                    let model = pca::pca_correlation(&sub)?;
                    let k = if k == "auto" {
                        return Err(Error::InvalidArgument("--k auto needs --method nipals".into()));
                    } else {
                        parse_k(&k)?
                    };
                    truncate(model, k)
                }
                PcaKind::Nipals => {
                    let z = data::standardize(&sub)?;
                    let k = if k == "auto" {
                        let k_max = impute::AUTO_K_MAX.min(names.len().saturating_sub(1)).max(1);
                        let est = pca::estimate_k(&z, k_max, impute::AUTO_K_FOLDS, seed)?;
                        log::info!("cross-validation picked k = {} (errors {:?})", est.k, est.cv_error);
                        est.k
                    } else {
                        parse_k(&k)?
                    };
                    pca::nipals(&z, &NipalsConfig::with_k(k))?
                }
            };
            mkdir(&out)?;
            model.write_loadings_csv(out.join("loadings.csv"))?;
            model.write_scores_csv(out.join("scores.csv"))?;
            model.write_explained_csv(out.join("explained.csv"))?;
        }
        Command::Evaluate {
            truth,
            schema,
            replicates,
            masked,
            completed,
            method,
            replicate,
            out,
        } => {
            let schema = schema.unwrap_or_else(|| sibling(&truth, "schema.txt"));
            let opts = CsvOptions::default();
            let gt = load_with(&truth, &schema, &opts)?;
            let reports = match (replicates, masked, completed) {
                (Some(dir), _, _) => evaluate_tree(&gt, &dir, &schema, &opts)?,
                (None, Some(masked), Some(completed)) => {
                    let masked = load_with(&masked, &schema, &opts)?;
                    let completed = load_with(&completed, &schema, &opts)?;
                    vec![evaluate::evaluate(&completed, &gt, &masked, &method, replicate)?]
                }
                _ => return Err(Error::InvalidArgument("give --replicates or both --masked and --completed".into())),
            };
            mkdir(&out)?;
            evaluate::write_tidy_csv(&reports, out.join("r2_tidy.csv"))?;
            write_json(&evaluate::aggregate(&reports), &out.join("aggregate.json"))?;
        }
        Command::Predict {
            loadings,
            features,
            calibration,
            out,
        } => {
            let model = PcaModel::load_loadings_csv(&loadings)?;
            let features = if features.is_empty() { model.variables.clone() } else { features };
            let report = imp::predict_imputability(&model, &features, parse_calibration(calibration.as_deref())?)?;
            write_report(&report, &out)?;
        }
        Command::Validate {
            loadings,
            r2,
            method,
            replicate,
            calibration,
            out,
        } => {
            let model = PcaModel::load_loadings_csv(&loadings)?;
            let observed = mean_by_feature(evaluate::read_tidy_feature_r2(&r2, method.as_deref(), replicate)?);
            let names: Vec<String> = observed.iter().map(|(n, _)| n.clone()).collect();
            let prediction = imp::predict_imputability(&model, &names, parse_calibration(calibration.as_deref())?)?;
            let v = imp::validate_prediction(&prediction, &observed)?;
            write_report(&v.report, &out)?;
            write_json(&v, &out.join("validation.json"))?;
            println!("fit_r2={:.4} slope={:.4} p={:.3e} spearman={:.4}", v.fit.fit_r2, v.fit.slope, v.fit.p_value, v.spearman);
        }
        Command::Pipeline {
            config,
            overrides,
            seed,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            };
            cfg.apply_overrides(&overrides)?;
            cfg.seed = Some(seed);
            if let Some(out) = out {
                cfg.output = out;
            }
            let summary = pipeline::run_pipeline(&cfg)?;
            for b in &summary.bars {
                println!(
                    "{:<10} overall R² {:.4} [{:.4}, {:.4}]  best {} {:.3}  worst {} {:.3}",
                    b.method, b.overall_mean, b.overall_min, b.overall_max, b.best_feature, b.best_r2, b.worst_feature, b.worst_r2
                );
            }
            for v in &summary.validations {
                println!(
                    "replicate {:>2}: NIPALS fit R² {:.4}, spearman {:.4}",
                    v.replicate, v.fit.fit_r2, v.spearman
                );
            }
        }
        Command::PlotData { summary, out } => {
            let out = out.unwrap_or_else(|| sibling(&summary, "plots"));
            let summary = Summary::load(&summary)?;
            for p in pipeline::emit_plot_data(&summary, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn parse_k(text: &str) -> Result<usize> {
    text.parse()
        .ok()
        .filter(|&k| k >= 1)
        .ok_or_else(|| Error::InvalidArgument(format!("--k expects a positive integer or auto, got '{text}'")))
}

fn truncate(mut model: PcaModel, k: usize) -> PcaModel {
    let k = k.min(model.n_components());
    model.loadings = model.loadings.columns(0, k).into_owned();
    model.scores = model.scores.columns(0, k).into_owned();
    model.explained.truncate(k);
    model
}

/// Mean R² per feature, in first-seen order.
fn mean_by_feature(rows: Vec<(String, f64)>) -> Vec<(String, f64)> {
    let mut acc: Vec<(String, f64, usize)> = Vec::new();
    for (name, r2) in rows {
        match acc.iter_mut().find(|(n, _, _)| *n == name) {
            Some(e) => {
                e.1 += r2;
                e.2 += 1;
            }
            None => acc.push((name, r2, 1)),
        }
    }
    acc.into_iter().map(|(n, s, c)| (n, s / c as f64)).collect()
}

fn write_report(report: &ImputabilityReport, out: &Path) -> Result<()> {
    mkdir(out)?;
    write_json(report, &out.join("report.json"))?;
    imp::write_scatter_csv(report, out.join("scatter.csv"))
}

/// Every `rep_XX/completed_<method>.csv`, in replicate then method order.
fn evaluate_tree(gt: &DataMatrix, dir: &Path, schema: &Path, opts: &CsvOptions) -> Result<Vec<R2Report>> {
    let io = |e| Error::Io {
        path: dir.to_owned(),
        source: e,
    };
    let mut reps: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("rep_")))
        .collect();
    reps.sort();
    let mut reports = Vec::new();
    for rep in reps {
        let r: usize = rep
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.trim_start_matches("rep_").parse().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("bad replicate folder {}", rep.display())))?;
        let masked = load_with(&rep.join("masked.csv"), schema, opts)?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(&rep)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("completed_") && n.ends_with(".csv"))
            })
            .collect();
        files.sort();
        for f in files {
            let name = f.file_stem().and_then(|n| n.to_str()).unwrap_or("").trim_start_matches("completed_").to_owned();
            let completed = load_with(&f, schema, opts)?;
            reports.push(
                evaluate::evaluate(&completed, gt, &masked, &name, r).map_err(|e| Error::Stage {
                    stage: "evaluate".into(),
                    replicate: Some(r),
                    source: Box::new(e),
                })?,
            );
        }
    }
    if reports.is_empty() {
        return Err(Error::InvalidArgument(format!("no completed matrices under {}", dir.display())));
    }
    Ok(reports)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
