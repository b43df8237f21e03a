//! Unsupervised recovery of the A/B split from the ratio matrix: k-means,
//! diagonal Gaussian mixtures, Ward clustering and spectral clustering,
//! plus the k search and feature diagnostics.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glyphs::RatioMatrix;
use crate::linalg::{jacobi_eigen, Matrix, JACOBI_TOLERANCE};
use crate::rng;
use crate::stats::{adjusted_rand_index, aic, bic, pca, permutation_test, silhouette, NullDistribution};

pub const DEFAULT_RESTARTS: usize = 50;
const MAX_LLOYD: usize = 300;
const GMM_MAX_ITER: usize = 500;
const GMM_TOL: f64 = 1e-8;
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Complete, standardized folio × pair matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub data: Matrix,
    /// Names of the kept pair columns.
    pub columns: Vec<String>,
    /// `imputed[i][c]` is true where the ratio was absent.
    pub imputed: Vec<Vec<bool>>,
    /// Pair columns dropped for having no present entry or no variance.
    pub dropped: Vec<String>,
}

/// Mean-imputes absent ratios and standardizes every column with the mean
/// and population sd of its present entries.
pub fn prepare_features(matrix: &RatioMatrix) -> Result<FeatureMatrix> {
    let n = matrix.n_folios();
    if n < 2 {
        return Err(Error::InsufficientData("features need at least two folios".into()));
    }
    let mut cols = Vec::new();
    let mut names = Vec::new();
    let mut imputed_cols = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..matrix.n_pairs() {
        let raw: Vec<Option<f64>> = (0..n).map(|i| matrix.ratio(i, j)).collect();
        let present: Vec<f64> = raw.iter().flatten().copied().collect();
        let name = &matrix.pair_names[j];
        if present.is_empty() {
            log::warn!("pair {name} has no qualifying folio; column dropped");
            dropped.push(name.clone());
            continue;
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        let sd = (present.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / present.len() as f64).sqrt();
        if sd <= 1e-12 {
            log::warn!("pair {name} is constant; column dropped");
            dropped.push(name.clone());
            continue;
        }
        cols.push(raw.iter().map(|r| (r.unwrap_or(mean) - mean) / sd).collect::<Vec<_>>());
        imputed_cols.push(raw.iter().map(Option::is_none).collect::<Vec<_>>());
        names.push(name.clone());
    }
    if cols.is_empty() {
        return Err(Error::InsufficientData("no usable feature column".into()));
    }
    Ok(FeatureMatrix {
        data: (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect(),
        columns: names,
        imputed: (0..n).map(|i| imputed_cols.iter().map(|c| c[i]).collect()).collect(),
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kmeans,
    Gmm,
    Hierarchical,
    Spectral,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Kmeans, Algorithm::Gmm, Algorithm::Hierarchical, Algorithm::Spectral];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub algorithm: Algorithm,
    pub k: usize,
    /// Cluster ids numbered by first appearance.
    pub labels: Vec<usize>,
    pub ari_vs_reference: Option<f64>,
    pub inertia: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub silhouette: Option<f64>,
    /// Fewer than `k` non-empty clusters.
    pub degenerate: bool,
}

impl ClusterResult {
    fn new(algorithm: Algorithm, k: usize, labels: Vec<usize>, points: &Matrix) -> Self {
        let labels = canonical(&labels);
        let used = labels.iter().max().map_or(0, |m| m + 1);
        ClusterResult {
            algorithm,
            k,
            silhouette: silhouette(points, &labels).ok(),
            labels,
            ari_vs_reference: None,
            inertia: None,
            log_likelihood: None,
            degenerate: used < k,
        }
    }

    /// Records the ARI against reference labels.
    pub fn with_reference(mut self, reference: &[usize]) -> Result<Self> {
        self.ari_vs_reference = Some(adjusted_rand_index(&self.labels, reference)?);
        Ok(self)
    }
}

fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check(points: &Matrix, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidInput("clustering needs k ≥ 2".into()));
    }
    if points.len() < k {
        return Err(Error::InsufficientData(format!("{} points for k = {k}", points.len())));
    }
    Ok(())
}

/// k-means++ seeding: first centre uniform, the rest with probability
/// proportional to squared distance from the nearest chosen centre.
fn plus_plus(points: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let n = points.len();
    let mut centres = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        };
        centres.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centres.last().unwrap()));
        }
    }
    centres
}

fn nearest(p: &[f64], centres: &Matrix) -> (usize, f64) {
    centres
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_dist(p, m)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

#[derive(Debug, Clone)]
pub struct LloydRun {
    pub labels: Vec<usize>,
    pub centres: Matrix,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub trace: Vec<f64>,
}

/// One k-means++ seeded Lloyd run.
pub fn lloyd(points: &Matrix, k: usize, rng: &mut impl Rng) -> LloydRun {
    let d = points[0].len();
    let mut centres = plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..MAX_LLOYD {
        let mut changed = false;
        let mut inertia = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            let (c, dist) = nearest(p, &centres);
            inertia += dist;
            if *l != c {
                *l = c;
                changed = true;
            }
        }
        trace.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut sizes = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            sizes[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
        for c in 0..k {
            if sizes[c] == 0 {
                // farthest point from its own centre becomes the new centre
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centres[labels[a]])
                            .total_cmp(&sq_dist(&points[b], &centres[labels[b]]))
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty");
                centres[c] = points[far].clone();
                labels[far] = c;
            }
        }
    }
    let inertia = *trace.last().expect("one pass");
    LloydRun { labels, centres, inertia, trace }
}

/// Best of `restarts` seeded Lloyd runs by inertia; ties keep the earliest
/// restart.
pub fn kmeans(points: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<ClusterResult> {
    check(points, k)?;
    let runs: Vec<LloydRun> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| lloyd(points, k, &mut rng::derive(seed, r as u64)))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .expect("at least one restart");
    let mut res = ClusterResult::new(Algorithm::Kmeans, k, best.labels, points);
    res.inertia = Some(best.inertia);
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub weights: Vec<f64>,
    pub means: Matrix,
    pub variances: Matrix,
    pub log_likelihood: f64,
    pub n_params: usize,
    pub responsibilities: Matrix,
    pub ll_trace: Vec<f64>,
}

impl GmmFit {
    pub fn bic(&self, n: usize) -> f64 {
        bic(self.log_likelihood, self.n_params, n)
    }

    pub fn aic(&self) -> f64 {
        aic(self.log_likelihood, self.n_params)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-likelihood and responsibilities of a diagonal mixture.
fn e_step(points: &Matrix, weights: &[f64], means: &Matrix, vars: &Matrix) -> (f64, Matrix) {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut ll = 0.0;
    let resp = points
        .iter()
        .map(|p| {
            let logs: Vec<f64> = (0..weights.len())
                .map(|c| {
                    let quad: f64 = p
                        .iter()
                        .zip(&means[c])
                        .zip(&vars[c])
                        .map(|((x, m), v)| (x - m) * (x - m) / v + v.ln() + ln2pi)
                        .sum();
                    weights[c].ln() - 0.5 * quad
                })
                .collect();
            let total = log_sum_exp(&logs);
            ll += total;
            logs.iter().map(|l| (l - total).exp()).collect()
        })
        .collect();
    (ll, resp)
}

/// One EM run from a k-means++ style start.
pub fn gmm_once(points: &Matrix, k: usize, rng: &mut impl Rng) -> GmmFit {
    let n = points.len();
    let d = points[0].len();
    let global: Vec<f64> = (0..d)
        .map(|j| {
            let m = points.iter().map(|p| p[j]).sum::<f64>() / n as f64;
            (points.iter().map(|p| (p[j] - m).powi(2)).sum::<f64>() / n as f64).max(VARIANCE_FLOOR)
        })
        .collect();
    let mut means = plus_plus(points, k, rng);
    let mut vars = vec![global; k];
    let mut weights = vec![1.0 / k as f64; k];
    let (mut ll, mut resp) = e_step(points, &weights, &means, &vars);
    let mut trace = vec![ll];
    for _ in 0..GMM_MAX_ITER {
        for c in 0..k {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            weights[c] = nk / n as f64;
            if nk <= 1e-12 {
                continue;
            }
            for j in 0..d {
                let m = resp.iter().zip(points).map(|(r, p)| r[c] * p[j]).sum::<f64>() / nk;
                let v = resp.iter().zip(points).map(|(r, p)| r[c] * (p[j] - m).powi(2)).sum::<f64>() / nk;
                means[c][j] = m;
                vars[c][j] = v.max(VARIANCE_FLOOR);
            }
        }
        let (next, r) = e_step(points, &weights, &means, &vars);
        resp = r;
        trace.push(next);
        let done = (next - ll).abs() <= GMM_TOL * next.abs().max(1.0);
        ll = next;
        if done {
            break;
        }
    }
    GmmFit {
        weights,
        means,
        variances: vars,
        log_likelihood: ll,
        n_params: k * 2 * d + k - 1,
        responsibilities: resp,
        ll_trace: trace,
    }
}

/// Diagonal-covariance Gaussian mixture by EM, best log-likelihood over
/// restarts. Variances are floored at [`VARIANCE_FLOOR`].
pub fn gmm_fit(points: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<GmmFit> {
    check(points, k)?;
    Ok((0..restarts.max(1))
        .into_par_iter()
        .map(|r| gmm_once(points, k, &mut rng::derive(seed, r as u64)))
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.log_likelihood > a.log_likelihood { b } else { a })
        .expect("at least one restart"))
}

pub fn gmm(points: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<ClusterResult> {
    let fit = gmm_fit(points, k, restarts, seed)?;
    let labels = fit.responsibilities.iter().map(|r| crate::bbmix::argmax(r)).collect();
    let mut res = ClusterResult::new(Algorithm::Gmm, k, labels, points);
    res.log_likelihood = Some(fit.log_likelihood);
    Ok(res)
}

/// Agglomerative clustering with Ward linkage (Lance-Williams updates),
/// cut at `k` clusters. Equal merge costs go to the lowest index pair.
pub fn hierarchical(points: &Matrix, k: usize) -> Result<ClusterResult> {
    check(points, k)?;
    let n = points.len();
    // Ward cost of merging two singletons is half their squared distance.
    let mut dist: Matrix = (0..n)
        .map(|i| (0..n).map(|j| sq_dist(&points[i], &points[j]) / 2.0).collect())
        .collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut member: Vec<usize> = (0..n).collect();
    for _ in 0..n - k {
        let mut best = (f64::INFINITY, 0, 0);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if dist[i][j] < best.0 {
                    best = (dist[i][j], i, j);
                }
            }
        }
        let (dij, i, j) = best;
        for m in (0..n).filter(|&m| active[m] && m != i && m != j) {
            let (ni, nj, nm) = (size[i] as f64, size[j] as f64, size[m] as f64);
            let v = ((ni + nm) * dist[i][m] + (nj + nm) * dist[j][m] - nm * dij) / (ni + nj + nm);
            dist[i][m] = v;
            dist[m][i] = v;
        }
        size[i] += size[j];
        active[j] = false;
        member.iter_mut().filter(|c| **c == j).for_each(|c| *c = i);
    }
    Ok(ClusterResult::new(Algorithm::Hierarchical, k, member, points))
}

/// Row-normalized eigenvectors of the `k` smallest eigenvalues of the
/// symmetric normalized Laplacian `I − D^{-1/2} W D^{-1/2}`.
pub fn spectral_embedding_from_affinity(affinity: &Matrix, k: usize) -> Matrix {
    let n = affinity.len();
    let inv_sqrt: Vec<f64> = affinity
        .iter()
        .map(|row| {
            let d: f64 = row.iter().sum();
            if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }
        })
        .collect();
    let lap: Matrix = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let off = affinity[i][j] * inv_sqrt[i] * inv_sqrt[j];
                    if i == j { 1.0 - off } else { -off }
                })
                .collect()
        })
        .collect();
    let eig = jacobi_eigen(&lap, JACOBI_TOLERANCE);
    let smallest = &eig.vectors[n - k..];
    (0..n)
        .map(|i| {
            let row: Vec<f64> = smallest.iter().map(|v| v[i]).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 { row.iter().map(|x| x / norm).collect() } else { row }
        })
        .collect()
}

/// Gaussian affinity with the median pairwise distance as bandwidth and a
/// zero diagonal.
pub fn gaussian_affinity(points: &Matrix) -> Matrix {
    let n = points.len();
    let mut dists: Vec<f64> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| sq_dist(&points[i], &points[j]).sqrt())
        .collect();
    dists.sort_by(f64::total_cmp);
    let sigma = crate::stats::quantile(&dists, 0.5);
    let sigma = if sigma > 0.0 { sigma } else { 1.0 };
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        (-sq_dist(&points[i], &points[j]) / (2.0 * sigma * sigma)).exp()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn spectral(points: &Matrix, k: usize, seed: u64) -> Result<ClusterResult> {
    check(points, k)?;
    let embedding = spectral_embedding_from_affinity(&gaussian_affinity(points), k);
    let inner = kmeans(&embedding, k, DEFAULT_RESTARTS, seed)?;
    Ok(ClusterResult::new(Algorithm::Spectral, k, inner.labels, points))
}

/// Runs one algorithm with the suite's defaults.
pub fn run_algorithm(algorithm: Algorithm, points: &Matrix, k: usize, seed: u64) -> Result<ClusterResult> {
    match algorithm {
        Algorithm::Kmeans => kmeans(points, k, DEFAULT_RESTARTS, seed),
        Algorithm::Gmm => gmm(points, k, DEFAULT_RESTARTS, seed),
        Algorithm::Hierarchical => hierarchical(points, k),
        Algorithm::Spectral => spectral(points, k, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSearchRow {
    pub k: usize,
    pub gmm_log_likelihood: f64,
    pub gmm_bic: f64,
    pub gmm_aic: f64,
    /// Silhouette per algorithm, in [`Algorithm::ALL`] order.
    pub silhouette: Vec<Option<f64>>,
}

pub fn k_search(points: &Matrix, ks: std::ops::RangeInclusive<usize>, seed: u64) -> Result<Vec<KSearchRow>> {
    ks.map(|k| {
        let fit = gmm_fit(points, k, DEFAULT_RESTARTS, seed)?;
        let silhouette = Algorithm::ALL
            .iter()
            .map(|&a| run_algorithm(a, points, k, seed).map(|r| r.silhouette))
            .collect::<Result<Vec<_>>>()?;
        Ok(KSearchRow {
            k,
            gmm_log_likelihood: fit.log_likelihood,
            gmm_bic: fit.bic(points.len()),
            gmm_aic: fit.aic(),
            silhouette,
        })
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pc1Split {
    pub explained_fraction: f64,
    pub labels: Vec<usize>,
    pub ari: f64,
    pub degenerate: bool,
}

/// Splits folios at the median PC1 score (ties go to the lower group).
pub fn pc1_median_split(points: &Matrix, reference: &[usize]) -> Result<Pc1Split> {
    let constant = points.iter().all(|p| p == &points[0]);
    let (scores, explained_fraction): (Vec<f64>, f64) = if constant {
        (vec![0.0; points.len()], 0.0)
    } else {
        let p = pca(points)?;
        (p.scores.iter().map(|s| s[0]).collect(), p.explained_fraction[0])
    };
    let median = crate::stats::quantile(&scores, 0.5);
    let labels: Vec<usize> = scores.iter().map(|&s| usize::from(s > median)).collect();
    let degenerate = labels.iter().all(|&l| l == labels[0]);
    Ok(Pc1Split {
        explained_fraction,
        ari: adjusted_rand_index(&labels, reference)?,
        labels,
        degenerate,
    })
}

/// k-means (k = 2, default restarts) ARI of a ratio matrix against a
/// reference partition.
pub fn kmeans_ari(matrix: &RatioMatrix, reference: &[usize], seed: u64) -> Result<f64> {
    let f = prepare_features(matrix)?;
    adjusted_rand_index(&kmeans(&f.data, 2, DEFAULT_RESTARTS, seed)?.labels, reference)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEffect {
    pub pair: String,
    pub ari: f64,
    /// ARI without the pair minus the full-feature ARI; only for
    /// leave-one-out rows.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOut {
    pub baseline_ari: f64,
    pub rows: Vec<PairEffect>,
    /// The two pairs whose removal raises ARI the most.
    pub most_disruptive: Vec<String>,
    pub without_most_disruptive_ari: f64,
}

/// k-means (k = 2) ARI with each pair removed, and with the two most
/// disruptive pairs removed together.
pub fn leave_one_pair_out(matrix: &RatioMatrix, reference: &[usize], seed: u64) -> Result<LeaveOneOut> {
    let p = matrix.n_pairs();
    if p < 2 {
        return Err(Error::InsufficientData("leave-one-out needs two pairs".into()));
    }
    let baseline = kmeans_ari(matrix, reference, seed)?;
    let without = |drop: &[usize]| {
        let keep: Vec<usize> = (0..p).filter(|j| !drop.contains(j)).collect();
        kmeans_ari(&matrix.select_pairs(&keep), reference, seed)
    };
    let rows = (0..p)
        .map(|j| {
            let ari = without(&[j])?;
            Ok(PairEffect { pair: matrix.pair_names[j].clone(), ari, delta: Some(ari - baseline) })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| rows[b].ari.total_cmp(&rows[a].ari).then(a.cmp(&b)));
    let top = &order[..2];
    let joint = if p > 2 { without(top)? } else { f64::NAN };
    Ok(LeaveOneOut {
        baseline_ari: baseline,
        most_disruptive: top.iter().map(|&j| matrix.pair_names[j].clone()).collect(),
        without_most_disruptive_ari: joint,
        rows,
    })
}

/// k-means (k = 2) ARI on each pair column alone.
pub fn single_pair_ari(matrix: &RatioMatrix, reference: &[usize], seed: u64) -> Result<Vec<PairEffect>> {
    (0..matrix.n_pairs())
        .map(|j| {
            let single = matrix.select_pairs(&[j]);
            let ari = match prepare_features(&single) {
                Ok(_) => kmeans_ari(&single, reference, seed)?,
                Err(Error::InsufficientData(_)) => 0.0,
                Err(e) => return Err(e),
            };
            Ok(PairEffect { pair: matrix.pair_names[j].clone(), ari, delta: None })
        })
        .collect()
}

/// ARI of a fixed clustering against shuffled reference labels.
pub fn clustering_permutation_test(labels: &[usize], reference: &[usize], iterations: usize, seed: u64) -> Result<NullDistribution> {
    adjusted_rand_index(labels, reference)?;
    Ok(permutation_test(
        |r| adjusted_rand_index(labels, r).expect("equal lengths"),
        reference,
        iterations,
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Currier;
    use crate::glyphs::{PairCounts, RowMeta};
    use rand_distr::{Distribution, Normal};

    fn blobs(centres: &[Vec<f64>], per: usize, sd: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = rng::derive(seed, 0);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (c, centre) in centres.iter().enumerate() {
            for _ in 0..per {
                pts.push(centre.iter().map(|m| m + noise.sample(&mut rng)).collect());
                truth.push(c);
            }
        }
        (pts, truth)
    }

    /// Ratio matrix from per-folio ratios in hundredths; `None` cells get
    /// too few counts to qualify.
    fn ratio_rows(rows: &[Vec<Option<f64>>]) -> RatioMatrix {
        let p = rows[0].len();
        RatioMatrix::from_counts(
            (0..rows.len())
                .map(|i| RowMeta { folio_id: format!("f{i}r"), quire: None, currier: Currier::A })
                .collect(),
            (0..p).map(|j| format!("p{j}")).collect(),
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|c| match c {
                            Some(x) => {
                                let a = (x * 100.0).round() as u64;
                                PairCounts { count_a: a, count_b: 100 - a }
                            }
                            None => PairCounts { count_a: 1, count_b: 1 },
                        })
                        .collect()
                })
                .collect(),
            20,
        )
        .unwrap()
    }

    #[test]
    fn mean_imputation_then_standardization() {
        let m = ratio_rows(&[vec![Some(0.2), Some(0.1)], vec![None, Some(0.3)], vec![Some(0.4), Some(0.5)]]);
        let f = prepare_features(&m).unwrap();
        let col0: Vec<f64> = f.data.iter().map(|r| r[0]).collect();
        for (x, want) in col0.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((x - want).abs() < 1e-9, "{col0:?}");
        }
        assert_eq!(f.imputed, vec![vec![false, false], vec![true, false], vec![false, false]]);
        for j in 0..2 {
            let col: Vec<f64> = f.data.iter().map(|r| r[j]).collect();
            assert!(crate::stats::mean(&col).abs() < 1e-9);
        }
        // complete column: population sd 1
        let col1: Vec<f64> = f.data.iter().map(|r| r[1]).collect();
        let var = col1.iter().map(|x| x * x).sum::<f64>() / 3.0;
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_and_constant_columns_dropped() {
        let m = ratio_rows(&[vec![None, Some(0.5), Some(0.1)], vec![None, Some(0.5), Some(0.2)]]);
        let f = prepare_features(&m).unwrap();
        assert_eq!(f.columns, vec!["p2"]);
        assert_eq!(f.dropped, vec!["p0", "p1"]);
    }

    #[test]
    fn separated_blobs_recovered_by_every_algorithm() {
        let (pts, truth) = blobs(&[vec![0.0, 0.0, 0.0], vec![10.0, 10.0, 10.0]], 25, 0.5, 1);
        for a in Algorithm::ALL {
            let r = run_algorithm(a, &pts, 2, 7).unwrap().with_reference(&truth).unwrap();
            assert_eq!(r.ari_vs_reference, Some(1.0), "{a:?}");
            assert!(!r.degenerate);
            assert_eq!(r, run_algorithm(a, &pts, 2, 7).unwrap().with_reference(&truth).unwrap());
        }
    }

    #[test]
    fn lloyd_inertia_decreases_to_fixed_point() {
        let (pts, _) = blobs(&[vec![0.0, 0.0], vec![2.0, 1.0], vec![1.0, 3.0]], 30, 1.0, 2);
        for s in 0..20 {
            let run = lloyd(&pts, 4, &mut rng::derive(s, 0));
            assert!(run.trace.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{:?}", run.trace);
            for (p, &l) in pts.iter().zip(&run.labels) {
                assert_eq!(nearest(p, &run.centres).0, l);
            }
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // Five identical points and one outlier: k = 3 must still use three
        // centres or report the split it can make.
        let mut pts = vec![vec![0.0]; 5];
        pts.push(vec![10.0]);
        pts.push(vec![11.0]);
        let r = kmeans(&pts, 3, 10, 1).unwrap();
        assert_eq!(r.labels.iter().max(), Some(&2));
        assert!(!r.degenerate);
    }

    #[test]
    fn gmm_log_likelihood_monotone() {
        for s in 0..20 {
            let (pts, _) = blobs(&[vec![0.0, 0.0, 0.0], vec![1.5, 0.5, -1.0]], 40, 1.0, 100 + s);
            let fit = gmm_once(&pts, 3, &mut rng::derive(s, 0));
            for w in fit.ll_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "{} after {}", w[1], w[0]);
            }
            assert_eq!(fit.n_params, 3 * 2 * 3 + 2);
        }
    }

    /// Ward by recomputing every merge cost from centroids.
    fn naive_ward(points: &Matrix, k: usize) -> Vec<usize> {
        let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
        let centroid = |c: &[usize]| -> Vec<f64> {
            let d = points[0].len();
            (0..d).map(|j| c.iter().map(|&i| points[i][j]).sum::<f64>() / c.len() as f64).collect()
        };
        while clusters.len() > k {
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
                    let cost = na * nb / (na + nb) * sq_dist(&centroid(&clusters[a]), &centroid(&clusters[b]));
                    if cost < best.0 - 1e-12 {
                        best = (cost, a, b);
                    }
                }
            }
            let merged = clusters.remove(best.2);
            clusters[best.1].extend(merged);
        }
        let mut labels = vec![0; points.len()];
        for (c, members) in clusters.iter().enumerate() {
            for &i in members {
                labels[i] = c;
            }
        }
        canonical(&labels)
    }

    #[test]
    fn ward_matches_direct_costs() {
        for s in 0..5 {
            let (pts, _) = blobs(&[vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0]], 10, 1.2, 200 + s);
            for k in 2..=5 {
                assert_eq!(hierarchical(&pts, k).unwrap().labels, naive_ward(&pts, k), "seed {s}, k {k}");
            }
        }
    }

    #[test]
    fn disconnected_affinity_embeds_to_two_points() {
        let n = 10;
        let w: Matrix = (0..n)
            .map(|i| (0..n).map(|j| if i != j && (i < 4) == (j < 4) { 0.5 + 0.01 * (i + j) as f64 } else { 0.0 }).collect())
            .collect();
        let e = spectral_embedding_from_affinity(&w, 2);
        for i in 0..n {
            let rep = if i < 4 { 0 } else { 4 };
            for (x, y) in e[i].iter().zip(&e[rep]) {
                assert!((x - y).abs() < 1e-8);
            }
        }
        let truth: Vec<usize> = (0..n).map(|i| usize::from(i >= 4)).collect();
        let r = kmeans(&e, 2, 5, 0).unwrap();
        assert_eq!(adjusted_rand_index(&r.labels, &truth).unwrap(), 1.0);
    }

    #[test]
    fn silhouette_picks_the_blob_count() {
        let two = blobs(&[vec![0.0, 0.0], vec![8.0, 8.0]], 20, 0.7, 5).0;
        let three = blobs(&[vec![0.0, 0.0], vec![8.0, 0.0], vec![0.0, 8.0]], 20, 0.7, 6).0;
        for (pts, want) in [(two, 2), (three, 3)] {
            let rows = k_search(&pts, 2..=5, 1).unwrap();
            assert_eq!(rows.len(), 4);
            let best = rows
                .iter()
                .max_by(|a, b| a.silhouette[0].unwrap().total_cmp(&b.silhouette[0].unwrap()))
                .unwrap();
            assert_eq!(best.k, want);
            assert!(rows.iter().all(|r| r.gmm_bic - r.gmm_aic > 0.0));
        }
    }

    #[test]
    fn pc1_split_cases() {
        let (pts, truth) = blobs(&[vec![0.0, 0.0], vec![6.0, 6.0]], 15, 0.5, 7);
        let s = pc1_median_split(&pts, &truth).unwrap();
        assert_eq!(s.ari, 1.0);
        assert!(!s.degenerate);
        assert!(s.explained_fraction > 0.9);

        let flat = vec![vec![1.0, 2.0]; 6];
        let d = pc1_median_split(&flat, &[0, 0, 0, 1, 1, 1]).unwrap();
        assert!(d.degenerate);
        assert!(d.ari.abs() < 1e-12);
    }

    fn informative_and_noise(seed: u64) -> (RatioMatrix, Vec<usize>) {
        let mut rng = rng::derive(seed, 0);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for i in 0..40 {
            let cls = i % 2;
            let signal = if cls == 0 { 0.25 } else { 0.75 } + rng.random_range(-0.05..0.05);
            rows.push(vec![Some(signal), Some(rng.random_range(0.1..0.9)), Some(rng.random_range(0.1..0.9))]);
            truth.push(cls);
        }
        (ratio_rows(&rows), truth)
    }

    #[test]
    fn noise_columns_are_not_needed() {
        let (m, truth) = informative_and_noise(8);
        let loo = leave_one_pair_out(&m, &truth, 1).unwrap();
        for row in &loo.rows[1..] {
            assert!(row.delta.unwrap() >= 0.0, "{row:?}");
        }
        assert!(loo.rows[0].delta.unwrap() < 0.0);
        assert!(!loo.most_disruptive.contains(&"p0".to_string()));
        assert_eq!(loo.without_most_disruptive_ari, 1.0);

        let single = single_pair_ari(&m, &truth, 1).unwrap();
        let best = single.iter().max_by(|a, b| a.ari.total_cmp(&b.ari)).unwrap();
        assert_eq!(best.pair, "p0");
        assert_eq!(best.ari, 1.0);
    }

    #[test]
    fn permutation_p_values() {
        let truth: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let d = clustering_permutation_test(&truth, &truth, 1000, 1).unwrap();
        assert_eq!(d.p_value(), 1.0 / 1001.0);

        let mut ps: Vec<f64> = (0..40)
            .map(|r| {
                let mut rng = rng::derive(500 + r, 0);
                let a: Vec<usize> = (0..40).map(|_| rng.random_range(0..2)).collect();
                let b: Vec<usize> = (0..40).map(|_| rng.random_range(0..2)).collect();
                clustering_permutation_test(&a, &b, 200, r).unwrap().p_value()
            })
            .collect();
        ps.sort_by(f64::total_cmp);
        let median = (ps[19] + ps[20]) / 2.0;
        assert!((0.25..=0.75).contains(&median), "{median}");
    }
}
