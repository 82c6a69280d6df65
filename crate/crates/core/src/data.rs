//! Tabular data model: a column-oriented matrix with an explicit missingness
//! mask, CSV/schema ingestion, standardization and pairwise-complete
//! correlation.
//!
//! Missing cells are tracked only through [`Column::observed`]. Their stored
//! value is `NaN` and must never be read as data.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// What a column is used for. Fixed at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Modeled variable; the only kind that receives injected missingness or imputation.
    Feature,
    /// Always-observed severity variable that drives missingness.
    Driver,
    /// Demographic covariate (never masked, never imputed).
    Demographic,
    /// Class variable (never masked, never imputed).
    Class,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Feature => "feature",
            Role::Driver => "driver",
            Role::Demographic => "demographic",
            Role::Class => "class",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "feature" => Ok(Role::Feature),
            "driver" => Ok(Role::Driver),
            "demographic" => Ok(Role::Demographic),
            "class" => Ok(Role::Class),
            other => Err(Error::Schema(format!("unknown role '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub role: Role,
    values: Vec<f64>,
    observed: Vec<bool>,
}

/// Equal when names, roles and masks agree and observed values match bit
/// for bit. The placeholders behind missing cells are ignored.
impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.role == other.role
            && self.observed == other.observed
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.observed)
                .all(|((a, b), &o)| !o || a.to_bits() == b.to_bits())
    }
}

impl Column {
    /// Fully observed column.
    pub fn new(name: impl Into<String>, role: Role, values: Vec<f64>) -> Self {
        let observed = vec![true; values.len()];
        Column {
            name: name.into(),
            role,
            values,
            observed,
        }
    }

    /// Column from optional cells; `None` is missing.
    pub fn from_options(name: impl Into<String>, role: Role, cells: &[Option<f64>]) -> Self {
        let values = cells.iter().map(|c| c.unwrap_or(f64::NAN)).collect();
        let observed = cells.iter().map(Option::is_some).collect();
        Column {
            name: name.into(),
            role,
            values,
            observed,
        }
    }

    /// Column with an explicit mask. Values at masked cells are replaced by `NaN`.
    pub fn with_mask(name: impl Into<String>, role: Role, mut values: Vec<f64>, observed: Vec<bool>) -> Self {
        assert_eq!(values.len(), observed.len(), "mask length must match values");
        for (v, &o) in values.iter_mut().zip(&observed) {
            if !o {
                *v = f64::NAN;
            }
        }
        Column {
            name: name.into(),
            role,
            values,
            observed,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw storage; masked cells hold `NaN`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn get(&self, row: usize) -> Option<f64> {
        self.observed[row].then(|| self.values[row])
    }

    pub fn observed_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.observed)
            .filter_map(|(&v, &o)| o.then_some(v))
            .collect()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn missing_count(&self) -> usize {
        self.len() - self.observed_count()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }
}

/// Descriptive statistics over the observed cells of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub observed_count: usize,
}

/// Rows × columns of numbers with a per-cell observed mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n_rows: usize,
    columns: Vec<Column>,
}

impl DataMatrix {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        let mut seen = HashSet::new();
        for c in &columns {
            if c.len() != n_rows {
                return Err(Error::Shape(format!(
                    "column '{}' has {} cells, expected {}",
                    c.name,
                    c.len(),
                    n_rows
                )));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name '{}'", c.name)));
            }
            if c.values.iter().zip(&c.observed).any(|(v, &o)| o && !v.is_finite()) {
                return Err(Error::Schema(format!("column '{}' holds a non-finite observed value", c.name)));
            }
        }
        Ok(DataMatrix { n_rows, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.column_index(name)?])
    }

    pub fn names_with_role(&self, role: Role) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.role == role)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.columns.iter().all(Column::is_complete)
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().map(Column::missing_count).sum()
    }

    /// New matrix holding the named columns in the given order.
    pub fn select(&self, names: &[impl AsRef<str>]) -> Result<DataMatrix> {
        let cols = names
            .iter()
            .map(|n| self.column(n.as_ref()).cloned())
            .collect::<Result<Vec<_>>>()?;
        DataMatrix::new(cols)
    }

    /// New matrix holding the given rows, in the given order.
    pub fn take_rows(&self, rows: &[usize]) -> Result<DataMatrix> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n_rows) {
            return Err(Error::Shape(format!("row {bad} out of range for {} rows", self.n_rows)));
        }
        let cols = self
            .columns
            .iter()
            .map(|c| {
                let values = rows.iter().map(|&i| c.values[i]).collect();
                let observed = rows.iter().map(|&i| c.observed[i]).collect();
                Column::with_mask(c.name.clone(), c.role, values, observed)
            })
            .collect();
        DataMatrix::new(cols)
    }

    /// Replace the values and mask of column `idx`.
    pub fn with_column_replaced(&self, idx: usize, values: Vec<f64>, observed: Vec<bool>) -> Result<DataMatrix> {
        let mut cols = self.columns.clone();
        let old = &cols[idx];
        cols[idx] = Column::with_mask(old.name.clone(), old.role, values, observed);
        DataMatrix::new(cols)
    }

    pub(crate) fn from_parts(columns: Vec<Column>) -> DataMatrix {
        let n_rows = columns.first().map_or(0, Column::len);
        DataMatrix { n_rows, columns }
    }

    /// Dense rows × cols matrix with `NaN` at masked cells, plus the mask.
    pub fn to_dense(&self) -> (DMatrix<f64>, Vec<Vec<bool>>) {
        let m = DMatrix::from_fn(self.n_rows, self.n_cols(), |i, j| self.columns[j].values[i]);
        let mask = (0..self.n_rows)
            .map(|i| self.columns.iter().map(|c| c.observed[i]).collect())
            .collect();
        (m, mask)
    }

    /// Copy of `self` whose values come from a dense matrix with the same
    /// shape. Every cell of the result is marked observed.
    pub fn completed_from_dense(&self, dense: &DMatrix<f64>) -> DataMatrix {
        let columns = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| Column::new(c.name.clone(), c.role, dense.column(j).iter().copied().collect()))
            .collect();
        DataMatrix::from_parts(columns)
    }
}

/// Column-name → role mapping read from a flat `name = role` text file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    entries: Vec<(String, Role)>,
}

impl Schema {
    pub fn new(entries: Vec<(String, Role)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, _) in &entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name '{name}'")));
            }
        }
        Ok(Schema { entries })
    }

    pub fn of(m: &DataMatrix) -> Schema {
        Schema {
            entries: m.columns.iter().map(|c| (c.name.clone(), c.role)).collect(),
        }
    }

    pub fn entries(&self) -> &[(String, Role)] {
        &self.entries
    }

    pub fn role(&self, name: &str) -> Option<Role> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, r)| *r)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, role) = line
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("line {}: expected 'name = role'", lineno + 1)))?;
            entries.push((name.trim().to_owned(), role.parse()?));
        }
        Schema::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(n, r)| format!("{n} = {r}\n")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Cells equal to this token (or empty) are missing.
    pub missing_token: String,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            missing_token: "NA".to_owned(),
        }
    }
}

/// Read a CSV with a header row. Only the columns named in `schema` are kept,
/// in file order.
pub fn read_csv<R: Read>(reader: R, schema: &Schema, opts: &CsvOptions) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();

    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::Schema(format!("duplicate column name '{h}' in header")));
        }
    }
    for (name, _) in schema.entries() {
        if !headers.iter().any(|h| h == name) {
            return Err(Error::Schema(format!("schema column '{name}' missing from file")));
        }
    }

    let kept: Vec<(usize, Role)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| schema.role(h).map(|r| (i, r)))
        .collect();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); kept.len()];

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (slot, &(idx, _)) in kept.iter().enumerate() {
            let raw = record.get(idx).unwrap_or("").trim();
            let cell = if raw.is_empty() || raw == opts.missing_token {
                None
            } else {
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Some(v),
                    _ => {
                        return Err(Error::Ingestion {
                            row: row + 1,
                            column: headers[idx].clone(),
                            value: raw.to_owned(),
                        })
                    }
                }
            };
            cells[slot].push(cell);
        }
    }

    let columns = kept
        .iter()
        .zip(cells)
        .map(|(&(idx, role), cells)| Column::from_options(headers[idx].clone(), role, &cells))
        .collect();
    DataMatrix::new(columns)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema, opts: &CsvOptions) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), schema, opts)
}

/// Write values with shortest round-trip formatting; masked cells become the missing token.
pub fn write_csv<W: Write>(m: &DataMatrix, writer: W, opts: &CsvOptions) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().delimiter(opts.delimiter).from_writer(writer);
    wtr.write_record(m.columns.iter().map(|c| c.name.as_str()))?;
    for i in 0..m.n_rows {
        wtr.write_record(m.columns.iter().map(|c| match c.get(i) {
            Some(v) => format!("{v}"),
            None => opts.missing_token.clone(),
        }))?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(m: &DataMatrix, path: impl AsRef<Path>, opts: &CsvOptions) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(m, std::io::BufWriter::new(file), opts)
}

/// Write the mask as 1 (observed) / 0 (missing).
pub fn save_mask_csv(m: &DataMatrix, path: impl AsRef<Path>, opts: &CsvOptions) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new().delimiter(opts.delimiter).from_writer(file);
    wtr.write_record(m.columns.iter().map(|c| c.name.as_str()))?;
    for i in 0..m.n_rows {
        wtr.write_record(m.columns.iter().map(|c| if c.observed[i] { "1" } else { "0" }))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn column_stats(m: &DataMatrix, name: &str) -> Result<ColumnStats> {
    let col = m.column(name)?;
    let obs = col.observed_values();
    if obs.is_empty() {
        return Err(Error::AllMissing(name.to_owned()));
    }
    Ok(ColumnStats {
        mean: stats::mean(&obs),
        sd: stats::sample_sd(&obs),
        median: stats::median(&obs),
        observed_count: obs.len(),
    })
}

/// Per-column affine scaling fitted on observed cells (sample sd).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(m: &DataMatrix) -> Result<Self> {
        let mut means = Vec::with_capacity(m.n_cols());
        let mut sds = Vec::with_capacity(m.n_cols());
        for c in &m.columns {
            let obs = c.observed_values();
            if obs.len() < 2 {
                return Err(Error::DegenerateColumn(c.name.clone()));
            }
            let sd = stats::sample_sd(&obs);
            if !(sd > 0.0) {
                return Err(Error::DegenerateColumn(c.name.clone()));
            }
            means.push(stats::mean(&obs));
            sds.push(sd);
        }
        Ok(Standardizer {
            names: m.names().into_iter().map(str::to_owned).collect(),
            means,
            sds,
        })
    }

    pub fn apply(&self, m: &DataMatrix) -> DataMatrix {
        self.map(m, |v, mean, sd| (v - mean) / sd)
    }

    pub fn invert(&self, m: &DataMatrix) -> DataMatrix {
        self.map(m, |v, mean, sd| v * sd + mean)
    }

    fn map(&self, m: &DataMatrix, f: impl Fn(f64, f64, f64) -> f64) -> DataMatrix {
        assert_eq!(m.n_cols(), self.means.len(), "standardizer fitted on a different shape");
        let columns = m
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let values = c
                    .values
                    .iter()
                    .zip(&c.observed)
                    .map(|(&v, &o)| if o { f(v, self.means[j], self.sds[j]) } else { f64::NAN })
                    .collect();
                Column {
                    name: c.name.clone(),
                    role: c.role,
                    values,
                    observed: c.observed.clone(),
                }
            })
            .collect();
        DataMatrix::from_parts(columns)
    }
}

/// Scale every column to observed-cell mean 0 and sample sd 1. Mask is unchanged.
pub fn standardize(m: &DataMatrix) -> Result<DataMatrix> {
    Ok(Standardizer::fit(m)?.apply(m))
}

/// Pairwise-complete Pearson correlation matrix (columns in matrix order).
pub fn correlation_matrix(m: &DataMatrix) -> Result<DMatrix<f64>> {
    const MIN_OVERLAP: usize = 3;
    let p = m.n_cols();
    let mut r = DMatrix::identity(p, p);
    for a in 0..p {
        for b in (a + 1)..p {
            let ca = &m.columns[a];
            let cb = &m.columns[b];
            let (xs, ys): (Vec<f64>, Vec<f64>) = (0..m.n_rows)
                .filter(|&i| ca.observed[i] && cb.observed[i])
                .map(|i| (ca.values[i], cb.values[i]))
                .unzip();
            if xs.len() < MIN_OVERLAP {
                return Err(Error::InsufficientOverlap {
                    a: ca.name.clone(),
                    b: cb.name.clone(),
                    shared: xs.len(),
                    needed: MIN_OVERLAP,
                });
            }
            let rho = stats::pearson(&xs, &ys).ok_or_else(|| {
                let name = if stats::sample_sd(&xs) > 0.0 { &cb.name } else { &ca.name };
                Error::DegenerateColumn(name.clone())
            })?;
            r[(a, b)] = rho;
            r[(b, a)] = rho;
        }
    }
    Ok(r)
}
