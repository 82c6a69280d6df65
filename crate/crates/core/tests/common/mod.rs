//! Oracles shared by the integration tests. Nothing here calls into the
//! library's linear algebra or statistics, so agreement is evidence.

#![allow(dead_code)]

/// Pearson correlation matrix of complete columns, sample-sd convention.
pub fn correlation(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = cols.len();
    let n = cols[0].len() as f64;
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut r = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in 0..p {
            let dot: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
            r[a][b] = dot / (norms[a] * norms[b]);
        }
    }
    r
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with unit eigenvectors as `vecs[k]`.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..p).flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                if a[i][j].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[j][j] - a[i][i]) / (2.0 * a[i][j]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let (aki, akj) = (a[k][i], a[k][j]);
                    a[k][i] = c * aki - s * akj;
                    a[k][j] = s * aki + c * akj;
                }
                for k in 0..p {
                    let (aik, ajk) = (a[i][k], a[j][k]);
                    a[i][k] = c * aik - s * ajk;
                    a[j][k] = s * aik + c * ajk;
                }
                for row in v.iter_mut() {
                    let (vi, vj) = (row[i], row[j]);
                    row[i] = c * vi - s * vj;
                    row[j] = s * vi + c * vj;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    let values = order.iter().map(|&k| a[k][k]).collect();
    let vecs = order.iter().map(|&k| v.iter().map(|row| row[k]).collect()).collect();
    (values, vecs)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The eight (|PC1|, missForest R²) pairs of the reference cohort table.
pub const TABLE_PAIRS: [(f64, f64); 8] = [
    (0.390, 0.862),
    (0.368, 0.821),
    (0.316, 0.775),
    (0.352, 0.763),
    (0.297, 0.682),
    (0.356, 0.797),
    (0.346, 0.791),
    (0.1959, 0.443),
];

/// Closed-form OLS over `TABLE_PAIRS`, computed once with an independent
/// statistics package and frozen here.
pub const TABLE_SLOPE: f64 = 2.1215903013014796;
pub const TABLE_INTERCEPT: f64 = 0.04669049741486908;
pub const TABLE_FIT_R2: f64 = 0.9585551603126217;
pub const TABLE_P_VALUE: f64 = 2.2601089573074465e-05;
