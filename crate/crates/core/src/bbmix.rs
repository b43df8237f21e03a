//! Beta-Binomial mixture over folio pair counts.
//!
//! Each folio belongs to one of `k` latent regimes. Within a regime the
//! count of `symbol_a` among the `n` occurrences of a pair is Beta-Binomial
//! with regime- and pair-specific `(α, β)`; pairs are independent given the
//! regime and non-qualifying pairs contribute nothing to the likelihood.
//!
//! Parameters are fitted by EM. The M-step re-estimates each `(α, β)` by
//! matching the responsibility-weighted mean and variance of the folio
//! ratios. A moment estimate is accepted only when it does not lower the
//! expected complete-data log-likelihood, which keeps the observed
//! log-likelihood non-decreasing.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::glyphs::CountPanel;
use crate::rng;
use crate::stats::{adjusted_rand_index, bic};

pub const MEAN_CLAMP: f64 = 1e-4;
pub const MIN_CONCENTRATION: f64 = 0.5;
pub const MAX_CONCENTRATION: f64 = 1e4;
/// Relative variance below which weighted ratios count as constant.
const ZERO_VARIANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBinomParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaBinomParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("Beta-Binomial needs α, β > 0 (got {alpha}, {beta})")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    fn ln_beta_norm(&self) -> f64 {
        ln_gamma(self.alpha + self.beta) - ln_gamma(self.alpha) - ln_gamma(self.beta)
    }

    /// log pmf without the binomial coefficient, using a precomputed
    /// `-ln B(α, β)`.
    fn kernel(&self, x: u64, n: u64, neg_ln_beta: f64) -> f64 {
        let (x, n) = (x as f64, n as f64);
        ln_gamma(x + self.alpha) + ln_gamma(n - x + self.beta) - ln_gamma(n + self.alpha + self.beta) + neg_ln_beta
    }
}

fn ln_choose(n: u64, x: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(x as f64 + 1.0) - ln_gamma((n - x) as f64 + 1.0)
}

/// `ln[ C(n,x) · B(x+α, n−x+β) / B(α,β) ]`.
pub fn betabinom_logpmf(x: u64, n: u64, params: BetaBinomParams) -> Result<f64> {
    if x > n {
        return Err(Error::InvalidInput(format!("x = {x} exceeds n = {n}")));
    }
    BetaBinomParams::new(params.alpha, params.beta)?;
    if n == 0 {
        return Ok(0.0);
    }
    Ok(ln_choose(n, x) + params.kernel(x, n, params.ln_beta_norm()))
}

/// Weighted method-of-moments Beta fit to ratios.
///
/// The mean is clamped to `[1e-4, 1 − 1e-4]`. The concentration
/// `M = μ(1−μ)/v − 1` is clamped to `[0.5, 1e4]`, and falls back to 0.5 when
/// the variance is zero or at least `μ(1−μ)`. Returns `None` when the
/// weights sum to zero.
pub fn moment_match(ratios: &[f64], weights: &[f64]) -> Option<BetaBinomParams> {
    let sw: f64 = weights.iter().sum();
    if !(sw > 1e-12) {
        return None;
    }
    let mu = ratios.iter().zip(weights).map(|(r, w)| r * w).sum::<f64>() / sw;
    let var = ratios.iter().zip(weights).map(|(r, w)| w * (r - mu).powi(2)).sum::<f64>() / sw;
    let mu = mu.clamp(MEAN_CLAMP, 1.0 - MEAN_CLAMP);
    let bound = mu * (1.0 - mu);
    let m = if var <= ZERO_VARIANCE * bound || var >= bound {
        MIN_CONCENTRATION
    } else {
        (bound / var - 1.0).clamp(MIN_CONCENTRATION, MAX_CONCENTRATION)
    };
    Some(BetaBinomParams {
        alpha: mu * m,
        beta: (1.0 - mu) * m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed: 0,
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub k: usize,
    pub weights: Vec<f64>,
    /// `params[component][pair]`
    pub params: Vec<Vec<BetaBinomParams>>,
    /// `responsibilities[folio][component]`
    pub responsibilities: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub n_params: usize,
    pub bic: f64,
    pub restart_seed: u64,
    pub iterations: usize,
    /// Observed-data log-likelihood after each E-step of the winning restart.
    #[serde(skip)]
    pub ll_trace: Vec<f64>,
}

impl MixtureFit {
    /// Argmax component per folio, ties to the lowest index.
    pub fn hard_assignments(&self) -> Vec<usize> {
        self.responsibilities.iter().map(|row| argmax(row)).collect()
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn n_params(k: usize, n_pairs: usize) -> usize {
    2 * k * n_pairs + (k - 1)
}

/// Per-cell data prepared once per fit.
struct Prepared<'a> {
    panel: &'a CountPanel,
    n_pairs: usize,
    ln_choose_total: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(panel: &'a CountPanel) -> Result<Self> {
        let n_pairs = panel.first().map_or(0, Vec::len);
        let mut ln_choose_total = Vec::with_capacity(panel.len());
        for row in panel {
            if row.len() != n_pairs {
                return Err(Error::InvalidInput("ragged count panel".into()));
            }
            let mut s = 0.0;
            for &(x, n) in row.iter().flatten() {
                if x > n {
                    return Err(Error::InvalidInput(format!("count {x} exceeds total {n}")));
                }
                s += ln_choose(n, x);
            }
            ln_choose_total.push(s);
        }
        Ok(Self {
            panel,
            n_pairs,
            ln_choose_total,
        })
    }

    fn n(&self) -> usize {
        self.panel.len()
    }

    /// `(ln π_c + Σ_j kernel)` per folio and component.
    fn component_logs(&self, weights: &[f64], params: &[Vec<BetaBinomParams>]) -> Vec<Vec<f64>> {
        let norms: Vec<Vec<f64>> = params
            .iter()
            .map(|ps| ps.iter().map(BetaBinomParams::ln_beta_norm).collect())
            .collect();
        self.panel
            .iter()
            .zip(&self.ln_choose_total)
            .map(|(row, lc)| {
                (0..weights.len())
                    .map(|c| {
                        let mut s = weights[c].ln() + lc;
                        for (j, cell) in row.iter().enumerate() {
                            if let Some((x, n)) = *cell {
                                s += params[c][j].kernel(x, n, norms[c][j]);
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect()
    }

    /// Observed log-likelihood and posterior responsibilities.
    fn e_step(&self, weights: &[f64], params: &[Vec<BetaBinomParams>]) -> (f64, Vec<Vec<f64>>) {
        let logs = self.component_logs(weights, params);
        let mut ll = 0.0;
        let resp = logs
            .into_iter()
            .map(|row| {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = row.iter().map(|v| (v - m).exp()).sum();
                let lse = m + sum.ln();
                ll += lse;
                row.iter().map(|v| (v - lse).exp()).collect()
            })
            .collect();
        (ll, resp)
    }

    /// `Σ_i w_i · ln p(x_ij | θ)` for one pair, without binomial coefficients.
    fn expected_pair_ll(&self, pair: usize, weights: impl Fn(usize) -> f64, theta: BetaBinomParams) -> f64 {
        let norm = theta.ln_beta_norm();
        self.panel
            .iter()
            .enumerate()
            .filter_map(|(i, row)| row[pair].map(|(x, n)| weights(i) * theta.kernel(x, n, norm)))
            .sum()
    }

    fn pair_ratios(&self, pair: usize) -> (Vec<usize>, Vec<f64>) {
        self.panel
            .iter()
            .enumerate()
            .filter_map(|(i, row)| row[pair].filter(|&(_, n)| n > 0).map(|(x, n)| (i, x as f64 / n as f64)))
            .unzip()
    }

    /// Weights are the mean responsibility; each `(α, β)` is the moment
    /// estimate unless that would lower the expected log-likelihood relative
    /// to `previous`.
    fn m_step(
        &self,
        resp: &[Vec<f64>],
        previous: Option<&[Vec<BetaBinomParams>]>,
    ) -> (Vec<f64>, Vec<Vec<BetaBinomParams>>) {
        let k = resp[0].len();
        let n = self.n() as f64;
        let weights: Vec<f64> = (0..k).map(|c| resp.iter().map(|r| r[c]).sum::<f64>() / n).collect();
        let columns: Vec<(Vec<usize>, Vec<f64>)> = (0..self.n_pairs).map(|j| self.pair_ratios(j)).collect();
        let params = (0..k)
            .map(|c| {
                columns
                    .iter()
                    .enumerate()
                    .map(|(j, (idx, ratios))| {
                        let w: Vec<f64> = idx.iter().map(|&i| resp[i][c]).collect();
                        let old = previous.map(|p| p[c][j]);
                        let candidate = moment_match(ratios, &w)
                            .or(old)
                            .or_else(|| moment_match(ratios, &vec![1.0; ratios.len()]))
                            .unwrap_or(BetaBinomParams { alpha: 0.25, beta: 0.25 });
                        match old {
                            Some(old) if old != candidate => {
                                let q = |t| self.expected_pair_ll(j, |i| resp[i][c], t);
                                if q(candidate) >= q(old) {
                                    candidate
                                } else {
                                    old
                                }
                            }
                            _ => candidate,
                        }
                    })
                    .collect()
            })
            .collect();
        (weights, params)
    }
}

struct RestartResult {
    weights: Vec<f64>,
    params: Vec<Vec<BetaBinomParams>>,
    resp: Vec<Vec<f64>>,
    ll: f64,
    trace: Vec<f64>,
    iterations: usize,
}

fn dirichlet_ones(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / s).collect()
}

fn run_restart(data: &Prepared, k: usize, opts: &FitOptions, seed: u64) -> RestartResult {
    let mut rng = rng::derive(seed, 0);
    let mut resp: Vec<Vec<f64>> = (0..data.n()).map(|_| dirichlet_ones(k, &mut rng)).collect();
    let (mut weights, mut params) = data.m_step(&resp, None);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let (ll, new_resp) = data.e_step(&weights, &params);
        resp = new_resp;
        trace.push(ll);
        iterations += 1;
        let converged = trace.len() > 1 && (ll - trace[trace.len() - 2]).abs() < opts.tol;
        if converged || iterations >= opts.max_iter || !ll.is_finite() {
            break;
        }
        let (w, p) = data.m_step(&resp, Some(&params));
        weights = w;
        params = p;
    }
    RestartResult {
        weights,
        params,
        resp,
        ll: *trace.last().unwrap_or(&f64::NAN),
        trace,
        iterations,
    }
}

/// Fits a `k`-component mixture, keeping the best of `opts.restarts` random
/// initializations by final log-likelihood.
pub fn fit_mixture(panel: &CountPanel, k: usize, opts: &FitOptions) -> Result<MixtureFit> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let data = Prepared::new(panel)?;
    let usable = panel.iter().filter(|r| r.iter().any(Option::is_some)).count();
    if usable < k {
        return Err(Error::InsufficientData(format!(
            "{usable} folios with data cannot support {k} components"
        )));
    }
    let restarts = opts.restarts.max(1);
    let results: Vec<(u64, RestartResult)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let seed = rng::child_seed(opts.seed, r as u64);
            (seed, run_restart(&data, k, opts, seed))
        })
        .collect();

    let mut best: Option<(u64, RestartResult)> = None;
    for (seed, r) in results {
        if !r.ll.is_finite() {
            log::warn!("mixture k={k}: restart seed {seed} gave a non-finite log-likelihood; discarded");
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| r.ll > b.ll) {
            best = Some((seed, r));
        }
    }
    let (restart_seed, r) = best.ok_or_else(|| Error::InsufficientData(format!("every restart failed for k={k}")))?;

    // Canonical order: descending weight, ties by original index.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| r.weights[b].total_cmp(&r.weights[a]).then(a.cmp(&b)));
    let weights = order.iter().map(|&c| r.weights[c]).collect();
    let params = order.iter().map(|&c| r.params[c].clone()).collect();
    let responsibilities = r.resp.iter().map(|row| order.iter().map(|&c| row[c]).collect()).collect();
    let p = n_params(k, data.n_pairs);
    Ok(MixtureFit {
        k,
        weights,
        params,
        responsibilities,
        log_likelihood: r.ll,
        n_params: p,
        bic: bic(r.ll, p, panel.len()),
        restart_seed,
        iterations: r.iterations,
        ll_trace: r.trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub k: usize,
    pub log_likelihood: Option<f64>,
    pub n_params: usize,
    pub bic: Option<f64>,
    /// ARI of hard assignments against reference labels, when supplied.
    pub ari: Option<f64>,
    pub confident: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSelection {
    pub rows: Vec<SelectionRow>,
    pub best_k: Option<usize>,
    pub fits: Vec<MixtureFit>,
}

/// Fits every `k` in the range and flags the BIC minimum. Reference labels
/// are used only to score the fits.
pub fn select_k(
    panel: &CountPanel,
    k_range: std::ops::RangeInclusive<usize>,
    opts: &FitOptions,
    reference: Option<&[usize]>,
) -> ModelSelection {
    let n_pairs = panel.first().map_or(0, Vec::len);
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for k in k_range {
        match fit_mixture(panel, k, opts) {
            Ok(fit) => {
                let ari = reference.and_then(|r| adjusted_rand_index(&fit.hard_assignments(), r).ok());
                rows.push(SelectionRow {
                    k,
                    log_likelihood: Some(fit.log_likelihood),
                    n_params: fit.n_params,
                    bic: Some(fit.bic),
                    ari,
                    confident: Some(confident_assignments(&fit, 0.9).count_above_threshold),
                    error: None,
                });
                fits.push(fit);
            }
            Err(e) => rows.push(SelectionRow {
                k,
                log_likelihood: None,
                n_params: n_params(k, n_pairs),
                bic: None,
                ari: None,
                confident: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let best_k = rows
        .iter()
        .filter_map(|r| r.bic.map(|b| (r.k, b)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k);
    ModelSelection { rows, best_k, fits }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidentAssignments {
    pub assignments: Vec<usize>,
    pub confidence: Vec<f64>,
    pub count_above_threshold: usize,
    pub threshold: f64,
}

pub fn confident_assignments(fit: &MixtureFit, threshold: f64) -> ConfidentAssignments {
    let assignments = fit.hard_assignments();
    let confidence: Vec<f64> = fit
        .responsibilities
        .iter()
        .zip(&assignments)
        .map(|(row, &a)| row[a])
        .collect();
    ConfidentAssignments {
        count_above_threshold: confidence.iter().filter(|&&c| c > threshold).count(),
        assignments,
        confidence,
        threshold,
    }
}
