//! Information-gain feature ranking against a discrete class variable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Column, DataMatrix, Role};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgScore {
    pub feature: String,
    /// Bits.
    pub gain: f64,
}

/// Shannon entropy in bits of a sequence of discrete labels.
pub fn entropy<T: Ord>(labels: &[T]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("entropy of an empty sequence".into()));
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    Ok(entropy_of_counts(counts.values().copied(), labels.len()))
}

fn entropy_of_counts(counts: impl Iterator<Item = usize>, total: usize) -> f64 {
    let n = total as f64;
    let h: f64 = counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Equal-frequency bin index for every value. Cut points sit at the
/// `i·n/bins`-th order statistics, so equal values always share a bin.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cuts: Vec<f64> = (1..bins).map(|i| sorted[i * n / bins]).collect();
    values
        .iter()
        .map(|v| cuts.iter().filter(|&&c| *v >= c).count())
        .collect()
}

/// Exact-value label codes for a discrete column.
fn class_codes(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// IG of `feature` about `class`, discretizing the feature into `bins`
/// equal-frequency bins. Rows where either column is missing are dropped.
pub fn information_gain(feature: &Column, class: &Column, bins: usize) -> Result<IgScore> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be ≥ 1".into()));
    }
    if feature.len() != class.len() {
        return Err(Error::Shape("feature and class lengths differ".into()));
    }
    let rows: Vec<usize> = (0..feature.len())
        .filter(|&i| feature.observed()[i] && class.observed()[i])
        .collect();
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "feature '{}' shares no observed rows with class '{}'",
            feature.name, class.name
        )));
    }
    let fv: Vec<f64> = rows.iter().map(|&i| feature.values()[i]).collect();
    let cv: Vec<f64> = rows.iter().map(|&i| class.values()[i]).collect();
    let classes = class_codes(&cv);
    let bin_of = equal_frequency_bins(&fv, bins);

    let h_class = entropy(&classes)?;
    let mut groups: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for (b, c) in bin_of.into_iter().zip(classes) {
        groups.entry(b).or_default().push(c);
    }
    let n = rows.len() as f64;
    let conditional: f64 = groups
        .values()
        .map(|g| g.len() as f64 / n * entropy(g).unwrap_or(0.0))
        .sum();
    let gain = (h_class - conditional).clamp(0.0, h_class);
    Ok(IgScore {
        feature: feature.name.clone(),
        gain,
    })
}

/// IG of every feature-role column against `class_name`, in column order.
pub fn score_features(m: &DataMatrix, class_name: &str, bins: usize) -> Result<Vec<IgScore>> {
    let class = m.column(class_name)?;
    m.columns()
        .iter()
        .filter(|c| c.role == Role::Feature)
        .map(|c| information_gain(c, class, bins))
        .collect()
}

/// Names of the `k` highest-gain features; ties keep input order.
pub fn top_k(scores: &[IgScore], k: usize) -> Result<Vec<IgScore>> {
    if k > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {} scored features",
            scores.len()
        )));
    }
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| b.gain.total_cmp(&a.gain));
    ranked.truncate(k);
    Ok(ranked)
}
