//! Statistical primitives shared by the analyses: association, partition
//! agreement, information criteria, silhouette, PCA and the permutation
//! engine.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, JACOBI_TOLERANCE};
use crate::rng;

/// Tolerance for "≥ observed" comparisons on floating statistics.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    /// `cells[row][col]`
    pub cells: [[u64; 2]; 2],
}

impl ContingencyTable2x2 {
    pub fn new(cells: [[u64; 2]; 2]) -> Self {
        Self { cells }
    }

    pub fn n(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn transpose(&self) -> Self {
        let [[a, b], [c, d]] = self.cells;
        Self::new([[a, c], [b, d]])
    }
}

/// Cramér's V of a 2×2 table, `sqrt(χ²/n)`.
///
/// A table with an empty row or column has no defined association; it is
/// reported as 0 with a warning.
pub fn cramers_v(table: &ContingencyTable2x2) -> f64 {
    let [[a, b], [c, d]] = table.cells.map(|r| r.map(|x| x as f64));
    let margins = [a + b, c + d, a + c, b + d];
    if margins.iter().any(|&m| m == 0.0) {
        log::warn!("degenerate contingency table {:?}; Cramér's V set to 0", table.cells);
        return 0.0;
    }
    let denom = margins.iter().map(|m| m.sqrt()).product::<f64>();
    ((a * d - b * c).abs() / denom).min(1.0)
}

fn comb2(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand Index between two labelings of the same elements.
pub fn adjusted_rand_index(p1: &[usize], p2: &[usize]) -> Result<f64> {
    if p1.len() != p2.len() {
        return Err(Error::InvalidInput(format!(
            "partitions cover {} and {} elements",
            p1.len(),
            p2.len()
        )));
    }
    let mut joint: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&x, &y) in p1.iter().zip(p2) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&n| comb2(n as f64)).sum();
    let sum_rows: f64 = rows.values().map(|&n| comb2(n as f64)).sum();
    let sum_cols: f64 = cols.values().map(|&n| comb2(n as f64)).sum();
    let total = comb2(p1.len() as f64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max = (sum_rows + sum_cols) / 2.0;
    if (max - expected).abs() < f64::EPSILON {
        // Both partitions all-singletons or both a single block.
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

pub fn bic(log_likelihood: f64, n_params: usize, n_observations: usize) -> f64 {
    -2.0 * log_likelihood + n_params as f64 * (n_observations.max(1) as f64).ln()
}

pub fn aic(log_likelihood: f64, n_params: usize) -> f64 {
    -2.0 * log_likelihood + 2.0 * n_params as f64
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette width with Euclidean distance. Points in singleton
/// clusters contribute 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::InvalidInput("silhouette: label count mismatch".into()));
    }
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_default() += 1;
    }
    if sizes.len() < 2 {
        return Err(Error::InvalidInput("silhouette needs at least two clusters".into()));
    }
    let n = points.len();
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[&own] == 1 {
                return 0.0;
            }
            let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
            for j in 0..n {
                if j != i {
                    *sums.entry(labels[j]).or_default() += euclidean(&points[i], &points[j]);
                }
            }
            let a = sums.get(&own).copied().unwrap_or(0.0) / (sizes[&own] - 1) as f64;
            let b = sums
                .iter()
                .filter(|(l, _)| **l != own)
                .map(|(l, s)| s / sizes[l] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pca {
    /// Indices of the input columns that had non-zero variance.
    pub kept_columns: Vec<usize>,
    /// `components[c]` holds the loadings of component `c` over the kept columns.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_fraction: Vec<f64>,
    /// `scores[i][c]`: projection of row `i` on component `c`.
    pub scores: Vec<Vec<f64>>,
}

/// PCA on the correlation structure: columns are standardized, then the
/// covariance of the standardized matrix is diagonalized.
pub fn pca(matrix: &[Vec<f64>]) -> Result<Pca> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::InsufficientData("PCA needs at least two rows".into()));
    }
    let p = matrix[0].len();
    let mut kept = Vec::new();
    let mut columns = Vec::new();
    for j in 0..p {
        let col: Vec<f64> = matrix.iter().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var <= 1e-24 {
            log::warn!("PCA: column {j} has zero variance; dropped");
            continue;
        }
        let sd = var.sqrt();
        kept.push(j);
        columns.push(col.iter().map(|x| (x - mean) / sd).collect::<Vec<_>>());
    }
    let d = kept.len();
    if d == 0 {
        return Err(Error::InsufficientData("PCA: every column is constant".into()));
    }
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| columns[a].iter().zip(&columns[b]).map(|(x, y)| x * y).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect();
    let eig = jacobi_eigen(&cov, JACOBI_TOLERANCE);
    let variance: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = variance.iter().sum();
    let fraction = variance.iter().map(|v| v / total).collect();
    let scores = (0..n)
        .map(|i| {
            eig.vectors
                .iter()
                .map(|v| v.iter().zip(&columns).map(|(w, col)| w * col[i]).sum())
                .collect()
        })
        .collect();
    Ok(Pca {
        kept_columns: kept,
        components: eig.vectors,
        explained_variance: variance,
        explained_fraction: fraction,
        scores,
    })
}

/// Observed statistic together with its resampled null distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub samples: Vec<f64>,
    pub observed: f64,
    pub seed: u64,
}

impl NullDistribution {
    /// Add-one p-value: `(1 + #{s ≥ observed}) / (1 + #samples)`.
    pub fn p_value(&self) -> f64 {
        let ge = self.samples.iter().filter(|&&s| s >= self.observed - TIE_EPS).count();
        (1 + ge) as f64 / (1 + self.samples.len()) as f64
    }

    /// Percentage of samples strictly below the observed value.
    pub fn percentile(&self) -> f64 {
        if self.samples.is_empty() {
            return 100.0;
        }
        let below = self.samples.iter().filter(|&&s| s < self.observed - TIE_EPS).count();
        100.0 * below as f64 / self.samples.len() as f64
    }

    pub fn count_at_least(&self, value: f64) -> usize {
        self.samples.iter().filter(|&&s| s >= value - TIE_EPS).count()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.samples)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear-interpolated quantile of the samples, `q` in [0, 1].
    pub fn quantile(&self, q: f64) -> f64 {
        quantile(&self.samples, q)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; NaN for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

/// Label-permutation engine for a vector-valued statistic. Iteration `i`
/// shuffles with stream `i` of `seed`, so the output does not depend on how
/// iterations are scheduled.
pub fn permutation_test_multi<L, F>(
    statistic: F,
    labels: &[L],
    iterations: usize,
    seed: u64,
) -> Vec<NullDistribution>
where
    L: Clone + Send + Sync,
    F: Fn(&[L]) -> Vec<f64> + Sync,
{
    let observed = statistic(labels);
    let draws = shuffled_samples(&statistic, labels, iterations, seed);
    observed
        .iter()
        .enumerate()
        .map(|(k, &obs)| NullDistribution {
            samples: draws.iter().map(|d| d[k]).collect(),
            observed: obs,
            seed,
        })
        .collect()
}

/// Statistic evaluated on `iterations` independent shuffles of `labels`.
pub fn shuffled_samples<L, T, F>(statistic: F, labels: &[L], iterations: usize, seed: u64) -> Vec<T>
where
    L: Clone + Send + Sync,
    T: Send,
    F: Fn(&[L]) -> T + Sync,
{
    (0..iterations)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::derive(seed, i as u64);
            let mut shuffled = labels.to_vec();
            shuffled.shuffle(&mut rng);
            statistic(&shuffled)
        })
        .collect()
}

pub fn permutation_test<L, F>(statistic: F, labels: &[L], iterations: usize, seed: u64) -> NullDistribution
where
    L: Clone + Send + Sync,
    F: Fn(&[L]) -> f64 + Sync,
{
    permutation_test_multi(|l| vec![statistic(l)], labels, iterations, seed)
        .pop()
        .expect("one statistic")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupDiffResult {
    pub observed_diff: f64,
    pub p_value: f64,
    /// True when every relabeling was enumerated instead of sampled.
    pub exhaustive: bool,
    pub resamples: u64,
}

const RESAMPLE_BLOCK: usize = 1024;

fn n_choose_k(n: usize, k: usize) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// One-sided permutation test of `mean(group_y) > mean(group_x)` by pooled
/// relabeling. When the number of distinct relabelings does not exceed
/// `iterations` they are enumerated and the exact p-value is returned;
/// otherwise `iterations` random relabelings give an add-one p-value.
pub fn group_diff_test(group_x: &[f64], group_y: &[f64], iterations: usize, seed: u64) -> Result<GroupDiffResult> {
    if group_x.is_empty() || group_y.is_empty() {
        return Err(Error::InsufficientData("group_diff_test needs two non-empty groups".into()));
    }
    let pooled: Vec<f64> = group_x.iter().chain(group_y).copied().collect();
    let n = pooled.len();
    let ny = group_y.len();
    let total: f64 = pooled.iter().sum();
    let diff_of = |sum_y: f64| sum_y / ny as f64 - (total - sum_y) / (n - ny) as f64;
    let observed = diff_of(group_y.iter().sum());

    if let Some(count) = n_choose_k(n, ny).filter(|&c| c <= iterations as u64) {
        let mut idx: Vec<usize> = (0..ny).collect();
        let mut hits = 0u64;
        loop {
            let s: f64 = idx.iter().map(|&i| pooled[i]).sum();
            if diff_of(s) >= observed - TIE_EPS {
                hits += 1;
            }
            // next combination in lexicographic order
            let mut i = ny;
            while i > 0 && idx[i - 1] == n - ny + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..ny {
                idx[j] = idx[j - 1] + 1;
            }
        }
        return Ok(GroupDiffResult {
            observed_diff: observed,
            p_value: hits as f64 / count as f64,
            exhaustive: true,
            resamples: count,
        });
    }

    let blocks = iterations.div_ceil(RESAMPLE_BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::derive(seed, b as u64);
            let mut pool = pooled.clone();
            let todo = RESAMPLE_BLOCK.min(iterations - b * RESAMPLE_BLOCK);
            let mut hits = 0u64;
            for _ in 0..todo {
                // partial Fisher-Yates: first ny slots become the y group
                for i in 0..ny {
                    let j = rng.random_range(i..n);
                    pool.swap(i, j);
                }
                let s: f64 = pool[..ny].iter().sum();
                if diff_of(s) >= observed - TIE_EPS {
                    hits += 1;
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(GroupDiffResult {
        observed_diff: observed,
        p_value: (1 + hits) as f64 / (1 + iterations) as f64,
        exhaustive: false,
        resamples: iterations as u64,
    })
}
