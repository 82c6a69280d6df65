//! Regression random forest: bootstrap per tree, `mtry` candidate predictors
//! per split, variance-reduction (SSE) splitting.

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Predictors tried per split; `None` uses ⌈p/3⌉.
    pub mtry: Option<usize>,
    /// Nodes with this many samples or fewer are not split.
    pub min_node: usize,
    pub max_depth: Option<usize>,
    /// Cap on missForest sweeps.
    pub max_rounds: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            mtry: None,
            min_node: 5,
            max_depth: None,
            max_rounds: 10,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, n_predictors: usize) -> Result<usize> {
        let mtry = self.mtry.unwrap_or_else(|| n_predictors.div_ceil(3)).max(1);
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be ≥ 1".into()));
        }
        if mtry > n_predictors {
            return Err(Error::InvalidArgument(format!(
                "mtry {mtry} exceeds {n_predictors} predictors"
            )));
        }
        Ok(mtry)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &dyn Fn(usize) -> f64) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row(feature) <= threshold { left } else { right },
            }
        }
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    mtry: usize,
    min_node: usize,
    max_depth: usize,
    rng: seed::Rng,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Builder<'_> {
    fn grow(&mut self, samples: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let n = samples.len();
        let sum: f64 = samples.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n as f64;
        self.nodes.push(Node::Leaf(mean));
        if n <= self.min_node || depth >= self.max_depth {
            return id;
        }
        let first = self.y[samples[0]];
        if samples.iter().all(|&i| self.y[i] == first) {
            return id;
        }

        let p = self.x.len();
        // Partial Fisher-Yates for mtry distinct predictors.
        for k in 0..self.mtry {
            let r = self.rng.random_range(k..p);
            self.order.swap(k, r);
        }
        let parent = sum * sum / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = samples.to_vec();
        for k in 0..self.mtry {
            let f = self.order[k];
            let col = &self.x[f];
            sorted.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut left = 0.0;
            for s in 1..n {
                left += self.y[sorted[s - 1]];
                let (lo, hi) = (col[sorted[s - 1]], col[sorted[s]]);
                if lo == hi {
                    continue;
                }
                let right = sum - left;
                let gain = left * left / s as f64 + right * right / (n - s) as f64 - parent;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (lo + hi)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return id;
        };
        if !(gain > 1e-12 * parent.abs().max(1e-300)) {
            return id;
        }
        let col = &self.x[feature];
        let mut mid = 0;
        for s in 0..n {
            if col[samples[s]] <= threshold {
                samples.swap(s, mid);
                mid += 1;
            }
        }
        let (l, r) = samples.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForest {
    trees: Vec<Tree>,
}

impl RegressionForest {
    /// Fit on `rows` of column-major predictors `x` (each `x[f]` has one value
    /// per row of the full table) with response `y` (indexed the same way).
    /// Tree `t` uses the RNG stream `child_seed(seed, t)`.
    pub fn fit(x: &[Vec<f64>], y: &[f64], rows: &[usize], cfg: &ForestConfig, seed: u64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("forest needs at least one training row".into()));
        }
        if x.is_empty() {
            return Err(Error::InvalidArgument("forest needs at least one predictor".into()));
        }
        let mtry = cfg.resolved_mtry(x.len())?;
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed::child_seed(seed, t as u64));
                let mut boot: Vec<usize> = (0..rows.len()).map(|_| rows[rng.random_range(0..rows.len())]).collect();
                let mut b = Builder {
                    x,
                    y,
                    mtry,
                    min_node: cfg.min_node.max(1),
                    max_depth: cfg.max_depth.unwrap_or(usize::MAX),
                    rng,
                    nodes: Vec::new(),
                    order: (0..x.len()).collect(),
                };
                b.grow(&mut boot, 0);
                Tree { nodes: b.nodes }
            })
            .collect();
        Ok(RegressionForest { trees })
    }

    /// Mean tree prediction for row `i` of the column-major predictors.
    pub fn predict_row(&self, x: &[Vec<f64>], i: usize) -> f64 {
        let row = |f: usize| x[f][i];
        let total: f64 = self.trees.iter().map(|t| t.predict(&row)).sum();
        total / self.trees.len() as f64
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_function_is_learned() {
        let n = 200;
        let x0: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let noise: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64).collect();
        let y: Vec<f64> = x0.iter().map(|&v| if v < 0.5 { 1.0 } else { 5.0 }).collect();
        let x = vec![x0, noise];
        let rows: Vec<usize> = (0..n).collect();
        let cfg = ForestConfig {
            n_trees: 20,
            mtry: Some(2),
            ..Default::default()
        };
        let f = RegressionForest::fit(&x, &y, &rows, &cfg, 3).unwrap();
        assert!((f.predict_row(&x, 10) - 1.0).abs() < 0.2);
        assert!((f.predict_row(&x, 190) - 5.0).abs() < 0.2);
    }

    #[test]
    fn deterministic_per_seed() {
        let x = vec![(0..50).map(|i| (i as f64).sin()).collect::<Vec<_>>()];
        let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).cos()).collect();
        let rows: Vec<usize> = (0..50).collect();
        let cfg = ForestConfig {
            n_trees: 10,
            ..Default::default()
        };
        let a = RegressionForest::fit(&x, &y, &rows, &cfg, 9).unwrap();
        let b = RegressionForest::fit(&x, &y, &rows, &cfg, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let cfg = ForestConfig {
            n_trees: 0,
            ..Default::default()
        };
        assert!(cfg.resolved_mtry(3).is_err());
        let cfg = ForestConfig {
            mtry: Some(4),
            ..Default::default()
        };
        assert!(cfg.resolved_mtry(3).is_err());
        assert_eq!(ForestConfig::default().resolved_mtry(10).unwrap(), 4);
    }
}
