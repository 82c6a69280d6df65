//! Severity-driven MAR missingness injection.
//!
//! Every target cell in row `i` is masked independently with probability
//! `clamp(base_rate + sign · slope · d_i, 0, 1)`, where `d_i` is the
//! normalized driver value of that row. With `sign = −1` and a z-scored
//! MMSE-like driver, low scores (more severe) raise the missing rate.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::data::{Column, DataMatrix, Role};
use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

pub const DEFAULT_BASE_RATE: f64 = 0.48;
pub const DEFAULT_SLOPE: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn from_value(v: f64) -> Result<Self> {
        if v == 1.0 {
            Ok(Sign::Plus)
        } else if v == -1.0 {
            Ok(Sign::Minus)
        } else {
            Err(Error::InvalidArgument(format!("sign must be +1 or -1, got {v}")))
        }
    }
}

/// How the driver column is normalized before entering the probability formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverNormalization {
    /// Mean 0, sample sd 1.
    #[default]
    ZScore,
    /// Rescaled to [0, 1].
    MinMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessSpec {
    pub driver: String,
    pub base_rate: f64,
    pub slope: f64,
    pub sign: Sign,
    pub normalization: DriverNormalization,
    /// Feature columns to mask; empty means every feature-role column.
    pub targets: Vec<String>,
    pub seed: u64,
}

impl MissingnessSpec {
    /// Severity-increasing defaults: base 0.48, slope 0.06, sign −1, z-scored driver.
    pub fn new(driver: impl Into<String>, seed: u64) -> Self {
        MissingnessSpec {
            driver: driver.into(),
            base_rate: DEFAULT_BASE_RATE,
            slope: DEFAULT_SLOPE,
            sign: Sign::Minus,
            normalization: DriverNormalization::ZScore,
            targets: Vec::new(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.base_rate) {
            return Err(Error::InvalidArgument(format!("base_rate {} outside [0, 1]", self.base_rate)));
        }
        if !(self.slope >= 0.0) {
            return Err(Error::InvalidArgument(format!("slope {} must be ≥ 0", self.slope)));
        }
        Ok(())
    }

    fn target_indices(&self, m: &DataMatrix) -> Result<Vec<usize>> {
        let names = if self.targets.is_empty() {
            m.names_with_role(Role::Feature)
        } else {
            self.targets.clone()
        };
        names
            .iter()
            .map(|n| {
                let idx = m.column_index(n)?;
                let col = &m.columns()[idx];
                if col.role != Role::Feature || *n == self.driver {
                    return Err(Error::InvalidArgument(format!(
                        "column '{n}' has role {} and cannot receive missingness",
                        col.role
                    )));
                }
                if !col.is_complete() {
                    return Err(Error::MissingCells(n.clone()));
                }
                Ok(idx)
            })
            .collect()
    }
}

/// Masking probability for one row given its normalized driver value.
pub fn cell_probability(spec: &MissingnessSpec, driver_normalized: f64) -> f64 {
    (spec.base_rate + spec.sign.value() * spec.slope * driver_normalized).clamp(0.0, 1.0)
}

pub fn normalize_driver(values: &[f64], how: DriverNormalization) -> Result<Vec<f64>> {
    match how {
        DriverNormalization::ZScore => {
            let m = stats::mean(values);
            let sd = stats::sample_sd(values);
            if !(sd > 0.0) {
                return Err(Error::InvalidArgument("driver has zero variance".into()));
            }
            Ok(values.iter().map(|v| (v - m) / sd).collect())
        }
        DriverNormalization::MinMax => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                return Err(Error::InvalidArgument("driver has zero range".into()));
            }
            Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectionOutcome {
    /// Input with target cells masked. The input matrix itself is the ground truth.
    pub data: DataMatrix,
    /// Fraction of target cells masked.
    pub realized_rate: f64,
    pub per_row_p: Vec<f64>,
    pub seed: u64,
}

/// Mask target cells row by row (rows outer, targets inner) with one
/// uniform draw per cell from a ChaCha8 stream seeded by `spec.seed`.
pub fn inject(m: &DataMatrix, spec: &MissingnessSpec) -> Result<InjectionOutcome> {
    spec.validate()?;
    let driver = m.column(&spec.driver)?;
    if !driver.is_complete() {
        return Err(Error::MissingCells(spec.driver.clone()));
    }
    let targets = spec.target_indices(m)?;
    let z = normalize_driver(driver.values(), spec.normalization)?;
    let per_row_p: Vec<f64> = z.iter().map(|&d| cell_probability(spec, d)).collect();

    let mut rng = seed::rng(spec.seed);
    let mut observed: Vec<Vec<bool>> = vec![vec![true; m.n_rows()]; targets.len()];
    let mut masked = 0usize;
    for (i, &p) in per_row_p.iter().enumerate() {
        for obs in observed.iter_mut() {
            let u: f64 = rng.random();
            if u < p {
                obs[i] = false;
                masked += 1;
            }
        }
    }

    let mut columns: Vec<Column> = m.columns().to_vec();
    for (&idx, obs) in targets.iter().zip(observed) {
        let c = &columns[idx];
        columns[idx] = Column::with_mask(c.name.clone(), c.role, c.values().to_vec(), obs);
    }
    let total = targets.len() * m.n_rows();
    Ok(InjectionOutcome {
        data: DataMatrix::new(columns)?,
        realized_rate: if total == 0 { 0.0 } else { masked as f64 / total as f64 },
        per_row_p,
        seed: spec.seed,
    })
}

/// `n` independent masks using seeds `spec.seed + i`.
pub fn replicate(m: &DataMatrix, spec: &MissingnessSpec, n: usize) -> Result<Vec<InjectionOutcome>> {
    if n == 0 {
        return Err(Error::InvalidArgument("replicate count must be ≥ 1".into()));
    }
    (0..n)
        .map(|i| {
            let mut s = spec.clone();
            s.seed = spec.seed.wrapping_add(i as u64);
            inject(m, &s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(n: usize) -> DataMatrix {
        let driver: Vec<f64> = (0..n).map(|i| i as f64).collect();
        DataMatrix::new(vec![
            Column::new("mmse", Role::Driver, driver.clone()),
            Column::new("f1", Role::Feature, driver.iter().map(|d| d * 2.0).collect()),
            Column::new("f2", Role::Feature, driver.iter().map(|d| -d).collect()),
            Column::new("age", Role::Demographic, vec![70.0; n]),
        ])
        .unwrap()
    }

    #[test]
    fn probability_examples() {
        let spec = MissingnessSpec::new("mmse", 0);
        assert_eq!(cell_probability(&spec, 0.0), 0.48);
        assert!((cell_probability(&spec, -2.0) - 0.60).abs() < 1e-15);
        let high = MissingnessSpec {
            base_rate: 0.99,
            ..spec
        };
        assert_eq!(cell_probability(&high, -3.0), 1.0);
    }

    #[test]
    fn extremes_mask_nothing_or_everything() {
        let m = base(50);
        let none = MissingnessSpec {
            base_rate: 0.0,
            slope: 0.0,
            ..MissingnessSpec::new("mmse", 3)
        };
        assert_eq!(inject(&m, &none).unwrap().data.missing_count(), 0);
        let all = MissingnessSpec {
            base_rate: 1.0,
            slope: 0.0,
            ..none
        };
        let out = inject(&m, &all).unwrap();
        assert_eq!(out.data.missing_count(), 100);
        assert_eq!(out.realized_rate, 1.0);
        assert!(out.data.column("mmse").unwrap().is_complete());
        assert!(out.data.column("age").unwrap().is_complete());
    }

    #[test]
    fn rejects_non_feature_targets_and_prior_missingness() {
        let m = base(10);
        let spec = MissingnessSpec {
            targets: vec!["age".into()],
            ..MissingnessSpec::new("mmse", 0)
        };
        assert!(inject(&m, &spec).is_err());
        let holed = m.with_column_replaced(1, vec![0.0; 10], {
            let mut o = vec![true; 10];
            o[3] = false;
            o
        });
        assert!(matches!(
            inject(&holed.unwrap(), &MissingnessSpec::new("mmse", 0)),
            Err(Error::MissingCells(_))
        ));
    }

    #[test]
    fn replicate_seeds_and_determinism() {
        let m = base(200);
        let spec = MissingnessSpec::new("mmse", 11);
        let one = replicate(&m, &spec, 1).unwrap();
        assert_eq!(one[0], inject(&m, &spec).unwrap());
        let reps = replicate(&m, &spec, 10).unwrap();
        for a in 0..reps.len() {
            for b in (a + 1)..reps.len() {
                assert_ne!(reps[a].data, reps[b].data);
            }
        }
        assert_eq!(reps, replicate(&m, &spec, 10).unwrap());
    }

    #[test]
    fn min_max_normalization() {
        let z = normalize_driver(&[2.0, 4.0, 6.0], DriverNormalization::MinMax).unwrap();
        assert_eq!(z, vec![0.0, 0.5, 1.0]);
    }
}
