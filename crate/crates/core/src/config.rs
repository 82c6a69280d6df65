//! Pipeline configuration as flat `key = value` text.
//!
//! Every key can be overridden after loading with [`PipelineConfig::set`],
//! which is what the CLI's `--set key=value` flag calls. Unknown keys are
//! errors so typos cannot silently fall back to defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impute::{ForestConfig, ImputeOptions, MethodSpec, PmmConfig, PpcaConfig, DEFAULT_COMPONENTS};
use crate::imputability::Calibration;
use crate::missingness::{DriverNormalization, MissingnessSpec, Sign, DEFAULT_BASE_RATE, DEFAULT_SLOPE};
use crate::select::DEFAULT_BINS;
use crate::synth::{ANALOG_CLASS, ANALOG_DRIVER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputSource {
    /// Latent-factor data; `None` uses the built-in cohort analog.
    Synth { spec: Option<PathBuf>, rows: Option<usize> },
    Csv {
        data: PathBuf,
        schema: PathBuf,
        missing_token: String,
        delimiter: u8,
    },
}

/// Line used to attach predicted R² to NIPALS rankings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CalibrationChoice {
    /// The complete-data fit of the validation method from this run.
    Complete,
    Fixed(Calibration),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: InputSource,
    pub class: String,
    pub driver: String,
    pub select_k: usize,
    pub bins: usize,
    pub base_rate: f64,
    pub slope: f64,
    pub sign: Sign,
    pub normalization: DriverNormalization,
    pub replicates: usize,
    /// Method names in run order.
    pub methods: Vec<String>,
    pub pmm: PmmConfig,
    pub forest: ForestConfig,
    pub ppca: PpcaConfig,
    /// `None` picks the count by cross-validation.
    pub nipals_k: Option<usize>,
    pub impute: ImputeOptions,
    /// Method whose per-feature R² is regressed on NIPALS PC1 per replicate.
    pub validate_method: String,
    pub calibration: CalibrationChoice,
    pub seed: Option<u64>,
    pub output: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: InputSource::Synth { spec: None, rows: None },
            class: ANALOG_CLASS.into(),
            driver: ANALOG_DRIVER.into(),
            select_k: 8,
            bins: DEFAULT_BINS,
            base_rate: DEFAULT_BASE_RATE,
            slope: DEFAULT_SLOPE,
            sign: Sign::Minus,
            normalization: DriverNormalization::ZScore,
            replicates: 10,
            methods: ["mean", "median", "missforest", "pmm", "ppca", "nipals"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            pmm: PmmConfig::default(),
            forest: ForestConfig::default(),
            ppca: PpcaConfig::default(),
            nipals_k: Some(DEFAULT_COMPONENTS),
            impute: ImputeOptions::default(),
            validate_method: "missforest".into(),
            calibration: CalibrationChoice::Complete,
            seed: None,
            output: PathBuf::from("imputability-out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse '{v}'")))
}

/// `auto` maps to `None`.
fn parse_auto(key: &str, v: &str) -> Result<Option<usize>> {
    match v.trim() {
        "auto" | "none" => Ok(None),
        other => parse_num(key, other).map(Some),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::InvalidArgument(format!("{key}: expected true/false, got '{other}'"))),
    }
}

fn show_auto(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".to_owned(), |k| k.to_string())
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("config line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        PipelineConfig::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "input" => {
                self.input = match v {
                    "synth" => InputSource::Synth { spec: None, rows: None },
                    "csv" => InputSource::Csv {
                        data: PathBuf::new(),
                        schema: PathBuf::new(),
                        missing_token: "NA".into(),
                        delimiter: b',',
                    },
                    other => return Err(Error::InvalidArgument(format!("input: expected synth or csv, got '{other}'"))),
                }
            }
            "synth.spec" | "synth.rows" => {
                if !matches!(self.input, InputSource::Synth { .. }) {
                    self.input = InputSource::Synth { spec: None, rows: None };
                }
                if let InputSource::Synth { spec, rows } = &mut self.input {
                    if key == "synth.spec" {
                        *spec = if v == "default" { None } else { Some(PathBuf::from(v)) };
                    } else {
                        *rows = parse_auto(key, v)?;
                    }
                }
            }
            "csv.data" | "csv.schema" | "csv.missing" | "csv.delimiter" => {
                if !matches!(self.input, InputSource::Csv { .. }) {
                    self.set("input", "csv")?;
                }
                if let InputSource::Csv {
                    data,
                    schema,
                    missing_token,
                    delimiter,
                } = &mut self.input
                {
                    match key {
                        "csv.data" => *data = PathBuf::from(v),
                        "csv.schema" => *schema = PathBuf::from(v),
                        "csv.missing" => *missing_token = v.to_owned(),
                        _ => {
                            let bytes = v.as_bytes();
                            if bytes.len() != 1 {
                                return Err(Error::InvalidArgument("csv.delimiter must be one byte".into()));
                            }
                            *delimiter = bytes[0];
                        }
                    }
                }
            }
            "class" => self.class = v.to_owned(),
            "driver" => self.driver = v.to_owned(),
            "select.k" => self.select_k = parse_num(key, v)?,
            "select.bins" => self.bins = parse_num(key, v)?,
            "missing.base" => self.base_rate = parse_num(key, v)?,
            "missing.slope" => self.slope = parse_num(key, v)?,
            "missing.sign" => self.sign = Sign::from_value(parse_num(key, v)?)?,
            "missing.normalization" => {
                self.normalization = match v {
                    "zscore" => DriverNormalization::ZScore,
                    "minmax" => DriverNormalization::MinMax,
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "missing.normalization: expected zscore or minmax, got '{other}'"
                        )))
                    }
                }
            }
            "replicates" => self.replicates = parse_num(key, v)?,
            "methods" => {
                let names: Vec<String> = v
                    .split(',')
                    .map(|s| s.trim().to_ascii_lowercase())
                    .filter(|s| !s.is_empty())
                    .map(|s| if s == "pmm15" { "pmm".to_owned() } else { s })
                    .collect();
                for n in &names {
                    n.parse::<MethodSpec>()?;
                }
                self.methods = names;
            }
            "pmm.m" => self.pmm.m = parse_num(key, v)?,
            "pmm.donors" => self.pmm.donors = parse_num(key, v)?,
            "pmm.cycles" => self.pmm.cycles = parse_num(key, v)?,
            "pmm.ridge" => self.pmm.ridge = parse_num(key, v)?,
            "missforest.trees" => self.forest.n_trees = parse_num(key, v)?,
            "missforest.mtry" => self.forest.mtry = parse_auto(key, v)?,
            "missforest.min_node" => self.forest.min_node = parse_num(key, v)?,
            "missforest.max_depth" => self.forest.max_depth = parse_auto(key, v)?,
            "missforest.rounds" => self.forest.max_rounds = parse_num(key, v)?,
            "ppca.k" => self.ppca.k = parse_auto(key, v)?.unwrap_or(0),
            "ppca.max_iter" => self.ppca.max_iter = parse_num(key, v)?,
            "ppca.tol" => self.ppca.tol = parse_num(key, v)?,
            "nipals.k" => self.nipals_k = parse_auto(key, v)?,
            "impute.include_class" => self.impute.include_class = parse_bool(key, v)?,
            "impute.include_driver" => self.impute.include_driver = parse_bool(key, v)?,
            "validate.method" => self.validate_method = v.to_ascii_lowercase(),
            "calibration" => {
                self.calibration = match v {
                    "complete" => CalibrationChoice::Complete,
                    "published" => CalibrationChoice::Fixed(Calibration::PUBLISHED),
                    "none" => CalibrationChoice::None,
                    pair => {
                        let (a, b) = pair.split_once(',').ok_or_else(|| {
                            Error::InvalidArgument(format!(
                                "calibration: expected complete, published, none or slope,intercept; got '{pair}'"
                            ))
                        })?;
                        CalibrationChoice::Fixed(Calibration {
                            slope: parse_num(key, a)?,
                            intercept: parse_num(key, b)?,
                        })
                    }
                }
            }
            "seed" => self.seed = Some(parse_num(key, v)?),
            "output" => self.output = PathBuf::from(v),
            other => return Err(Error::InvalidArgument(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Apply `key=value` override strings in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("override '{}' is not key=value", o.as_ref())))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be ≥ 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no imputation methods configured".into()));
        }
        if self.select_k == 0 || self.bins == 0 {
            return Err(Error::InvalidArgument("select.k and select.bins must be ≥ 1".into()));
        }
        if let InputSource::Csv { data, schema, .. } = &self.input {
            if data.as_os_str().is_empty() || schema.as_os_str().is_empty() {
                return Err(Error::InvalidArgument("csv input needs csv.data and csv.schema".into()));
            }
        }
        self.missingness_spec(0).validate()
    }

    /// Method specs in configured order.
    pub fn method_specs(&self) -> Result<Vec<MethodSpec>> {
        self.methods
            .iter()
            .map(|name| {
                Ok(match name.as_str() {
                    "pmm" => MethodSpec::Pmm(self.pmm.clone()),
                    "missforest" => MethodSpec::MissForest(self.forest.clone()),
                    "ppca" => MethodSpec::Ppca(self.ppca.clone()),
                    "nipals" => MethodSpec::Nipals { k: self.nipals_k },
                    other => other.parse()?,
                })
            })
            .collect()
    }

    pub fn missingness_spec(&self, seed: u64) -> MissingnessSpec {
        MissingnessSpec {
            driver: self.driver.clone(),
            base_rate: self.base_rate,
            slope: self.slope,
            sign: self.sign,
            normalization: self.normalization,
            targets: Vec::new(),
            seed,
        }
    }

    /// Canonical text; parsing it back gives an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.input {
            InputSource::Synth { spec, rows } => {
                kv("input", "synth".into());
                kv(
                    "synth.spec",
                    spec.as_ref().map_or_else(|| "default".into(), |p| p.display().to_string()),
                );
                kv("synth.rows", show_auto(*rows));
            }
            InputSource::Csv {
                data,
                schema,
                missing_token,
                delimiter,
            } => {
                kv("input", "csv".into());
                kv("csv.data", data.display().to_string());
                kv("csv.schema", schema.display().to_string());
                kv("csv.missing", missing_token.clone());
                kv("csv.delimiter", (*delimiter as char).to_string());
            }
        }
        kv("class", self.class.clone());
        kv("driver", self.driver.clone());
        kv("select.k", self.select_k.to_string());
        kv("select.bins", self.bins.to_string());
        kv("missing.base", self.base_rate.to_string());
        kv("missing.slope", self.slope.to_string());
        kv("missing.sign", self.sign.value().to_string());
        kv(
            "missing.normalization",
            match self.normalization {
                DriverNormalization::ZScore => "zscore".into(),
                DriverNormalization::MinMax => "minmax".into(),
            },
        );
        kv("replicates", self.replicates.to_string());
        kv("methods", self.methods.join(","));
        kv("pmm.m", self.pmm.m.to_string());
        kv("pmm.donors", self.pmm.donors.to_string());
        kv("pmm.cycles", self.pmm.cycles.to_string());
        kv("pmm.ridge", self.pmm.ridge.to_string());
        kv("missforest.trees", self.forest.n_trees.to_string());
        kv("missforest.mtry", show_auto(self.forest.mtry));
        kv("missforest.min_node", self.forest.min_node.to_string());
        kv("missforest.max_depth", show_auto(self.forest.max_depth));
        kv("missforest.rounds", self.forest.max_rounds.to_string());
        kv("ppca.k", show_auto(Some(self.ppca.k).filter(|&k| k > 0)));
        kv("ppca.max_iter", self.ppca.max_iter.to_string());
        kv("ppca.tol", self.ppca.tol.to_string());
        kv("nipals.k", show_auto(self.nipals_k));
        kv("impute.include_class", self.impute.include_class.to_string());
        kv("impute.include_driver", self.impute.include_driver.to_string());
        kv("validate.method", self.validate_method.clone());
        kv(
            "calibration",
            match self.calibration {
                CalibrationChoice::Complete => "complete".into(),
                CalibrationChoice::None => "none".into(),
                CalibrationChoice::Fixed(c) if c == Calibration::PUBLISHED => "published".into(),
                CalibrationChoice::Fixed(c) => format!("{},{}", c.slope, c.intercept),
            },
        );
        if let Some(seed) = self.seed {
            kv("seed", seed.to_string());
        }
        kv("output", self.output.display().to_string());
        s
    }
}
