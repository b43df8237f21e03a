//! Supervised Beta-Binomial classifier and the predictive-validation
//! harness built on it: repeated stratified cross-validation, spatial
//! splits, ratio R² and a label-permutation baseline.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbmix::{betabinom_logpmf, moment_match, BetaBinomParams};
use crate::corpus::Currier;
use crate::error::{Error, Result};
use crate::glyphs::CountPanel;
use crate::rng;
use crate::stats::{adjusted_rand_index, shuffled_samples, NullDistribution};

/// A training class below this fraction marks the split as imbalanced.
pub const MIN_CLASS_FRACTION: f64 = 0.25;

type Row = [Option<(u64, u64)>];

fn ratio(cell: Option<(u64, u64)>) -> Option<f64> {
    cell.filter(|&(_, n)| n > 0).map(|(x, n)| x as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    /// Indexed by class (0 = A, 1 = B).
    pub priors: [f64; 2],
    /// `params[class][pair]`; `None` when the class has no data for the pair.
    pub params: [Vec<Option<BetaBinomParams>>; 2],
    pub class_means: [Vec<Option<f64>>; 2],
    pub global_means: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Currier,
    /// Posterior probability of A and of B.
    pub posterior: [f64; 2],
}

impl Prediction {
    pub fn confidence(&self) -> f64 {
        self.posterior[self.label.class_index()]
    }
}

fn check_labels(labels: &[Currier]) -> Result<()> {
    if labels.iter().any(|l| !l.is_labeled()) {
        return Err(Error::InvalidInput("classifier labels must all be A or B".into()));
    }
    Ok(())
}

fn fit_indices(panel: &CountPanel, labels: &[Currier], idx: &[usize]) -> Result<ClassifierModel> {
    let n_pairs = panel.first().map_or(0, Vec::len);
    let mut counts = [0usize; 2];
    for &i in idx {
        counts[labels[i].class_index()] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::DegenerateTraining(format!(
            "training set has {} A and {} B folios",
            counts[0], counts[1]
        )));
    }
    let total = idx.len() as f64;
    let priors = [counts[0] as f64 / total, counts[1] as f64 / total];

    let class_ratios = |class: usize, pair: usize| -> Vec<f64> {
        idx.iter()
            .filter(|&&i| labels[i].class_index() == class)
            .filter_map(|&i| ratio(panel[i][pair]))
            .collect()
    };
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);

    let mut params: [Vec<Option<BetaBinomParams>>; 2] = [Vec::new(), Vec::new()];
    let mut class_means: [Vec<Option<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut global_means = Vec::with_capacity(n_pairs);
    for j in 0..n_pairs {
        let mut all = Vec::new();
        for c in 0..2 {
            let r = class_ratios(c, j);
            params[c].push(moment_match(&r, &vec![1.0; r.len()]));
            class_means[c].push(mean(&r));
            all.extend(r);
        }
        global_means.push(mean(&all));
    }
    Ok(ClassifierModel {
        priors,
        params,
        class_means,
        global_means,
    })
}

/// Learns per-class `(α, β)` for every pair by unweighted moment matching,
/// plus class and global mean ratios.
pub fn fit_classifier(panel: &CountPanel, labels: &[Currier]) -> Result<ClassifierModel> {
    if panel.len() != labels.len() {
        return Err(Error::InvalidInput("panel and labels differ in length".into()));
    }
    check_labels(labels)?;
    let idx: Vec<usize> = (0..panel.len()).collect();
    fit_indices(panel, labels, &idx)
}

/// Posterior over {A, B}: prior times the Beta-Binomial likelihood of every
/// pair that qualifies on this folio and is modelled for both classes.
/// Ties go to A.
pub fn predict(model: &ClassifierModel, row: &Row) -> Prediction {
    let mut logp = [model.priors[0].ln(), model.priors[1].ln()];
    for (j, cell) in row.iter().enumerate() {
        let (Some((x, n)), Some(Some(pa)), Some(Some(pb))) = (cell, model.params[0].get(j), model.params[1].get(j))
        else {
            continue;
        };
        logp[0] += betabinom_logpmf(*x, *n, *pa).unwrap_or(f64::NEG_INFINITY);
        logp[1] += betabinom_logpmf(*x, *n, *pb).unwrap_or(f64::NEG_INFINITY);
    }
    let m = logp[0].max(logp[1]);
    let e = [(logp[0] - m).exp(), (logp[1] - m).exp()];
    let s = e[0] + e[1];
    let posterior = [e[0] / s, e[1] / s];
    let label = if posterior[0] >= posterior[1] { Currier::A } else { Currier::B };
    Prediction { label, posterior }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingCondition {
    Balanced,
    /// A class makes up less than [`MIN_CLASS_FRACTION`] of the training set.
    Imbalanced,
    /// Only one class present; predictions fall back to that class.
    SingleClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FolioPrediction {
    pub index: usize,
    pub truth: Currier,
    pub predicted: Currier,
    /// Posterior probability of A, averaged over repeats.
    pub posterior_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub split: String,
    pub accuracy: f64,
    pub ari: f64,
    pub fold_accuracies: Vec<f64>,
    pub n_predictions: usize,
    pub permutation_p: Option<f64>,
    pub r2: Option<f64>,
    pub training_condition: TrainingCondition,
    pub training_class_counts: [usize; 2],
    pub predictions: Vec<FolioPrediction>,
}

impl ValidationReport {
    pub fn flagged(&self) -> bool {
        self.training_condition != TrainingCondition::Balanced
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: 20,
            seed: 0,
        }
    }
}

/// Fold index per folio: each class is shuffled and dealt round-robin,
/// continuing the deal across classes.
pub fn stratified_folds(labels: &[Currier], folds: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in [Currier::A, Currier::B] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        for i in members {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

fn check_cv(labels: &[Currier], folds: usize) -> Result<()> {
    check_labels(labels)?;
    if folds < 2 {
        return Err(Error::InvalidInput("cross-validation needs at least two folds".into()));
    }
    for class in [Currier::A, Currier::B] {
        let n = labels.iter().filter(|&&l| l == class).count();
        if n < folds {
            return Err(Error::InsufficientData(format!(
                "class {class} has {n} folios, fewer than {folds} folds"
            )));
        }
    }
    Ok(())
}

struct RepeatOutcome {
    predictions: Vec<Prediction>,
    fold_accuracies: Vec<f64>,
    /// (model SSE, baseline SSE) for ratio prediction.
    sse: (f64, f64),
}

fn run_repeat(panel: &CountPanel, labels: &[Currier], folds: usize, seed: u64, repeat: usize) -> Result<RepeatOutcome> {
    let mut rng = rng::derive(seed, repeat as u64);
    let assignment = stratified_folds(labels, folds, &mut rng);
    let mut predictions = vec![
        Prediction {
            label: Currier::A,
            posterior: [0.5, 0.5]
        };
        labels.len()
    ];
    let mut fold_accuracies = Vec::with_capacity(folds);
    let (mut sse_model, mut sse_base) = (0.0, 0.0);
    for fold in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != fold).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == fold).collect();
        let model = fit_indices(panel, labels, &train)?;
        let mut correct = 0;
        for &i in &test {
            let p = predict(&model, &panel[i]);
            correct += (p.label == labels[i]) as usize;
            predictions[i] = p;
            let class = labels[i].class_index();
            for (j, cell) in panel[i].iter().enumerate() {
                let (Some(r), Some(g)) = (ratio(*cell), model.global_means[j]) else {
                    continue;
                };
                let m = model.class_means[class][j].unwrap_or(g);
                sse_model += (r - m).powi(2);
                sse_base += (r - g).powi(2);
            }
        }
        fold_accuracies.push(correct as f64 / test.len() as f64);
    }
    Ok(RepeatOutcome {
        predictions,
        fold_accuracies,
        sse: (sse_model, sse_base),
    })
}

fn run_cv(panel: &CountPanel, labels: &[Currier], opts: &CvOptions) -> Result<Vec<RepeatOutcome>> {
    if panel.len() != labels.len() {
        return Err(Error::InvalidInput("panel and labels differ in length".into()));
    }
    check_cv(labels, opts.folds)?;
    (0..opts.repeats)
        .into_par_iter()
        .map(|r| run_repeat(panel, labels, opts.folds, opts.seed, r))
        .collect()
}

fn r2_from(outcomes: &[RepeatOutcome]) -> f64 {
    let (m, b) = outcomes.iter().fold((0.0, 0.0), |(m, b), o| (m + o.sse.0, b + o.sse.1));
    if b > 0.0 {
        1.0 - m / b
    } else {
        0.0
    }
}

fn class_indices(labels: &[Currier]) -> Vec<usize> {
    labels.iter().map(|l| l.class_index()).collect()
}

/// Repeated stratified k-fold CV. Accuracy and ARI pool the held-out
/// predictions of every repeat. The report also carries the ratio R² of the
/// same folds.
pub fn cross_validate(panel: &CountPanel, labels: &[Currier], opts: &CvOptions) -> Result<ValidationReport> {
    let outcomes = run_cv(panel, labels, opts)?;
    let truth = class_indices(labels);
    let mut pooled_pred = Vec::with_capacity(labels.len() * opts.repeats);
    let mut pooled_truth = Vec::with_capacity(pooled_pred.capacity());
    let mut posterior_sum = vec![0.0; labels.len()];
    for o in &outcomes {
        for (i, p) in o.predictions.iter().enumerate() {
            pooled_pred.push(p.label.class_index());
            pooled_truth.push(truth[i]);
            posterior_sum[i] += p.posterior[0];
        }
    }
    let correct = pooled_pred.iter().zip(&pooled_truth).filter(|(a, b)| a == b).count();
    let predictions = posterior_sum
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let posterior_a = s / opts.repeats as f64;
            FolioPrediction {
                index: i,
                truth: labels[i],
                predicted: if posterior_a >= 0.5 { Currier::A } else { Currier::B },
                posterior_a,
            }
        })
        .collect();
    let counts = [truth.iter().filter(|&&t| t == 0).count(), truth.iter().filter(|&&t| t == 1).count()];
    Ok(ValidationReport {
        split: format!("cv {}x{}", opts.repeats, opts.folds),
        accuracy: correct as f64 / pooled_pred.len() as f64,
        ari: adjusted_rand_index(&pooled_pred, &pooled_truth)?,
        fold_accuracies: outcomes.iter().flat_map(|o| o.fold_accuracies.clone()).collect(),
        n_predictions: pooled_pred.len(),
        permutation_p: None,
        r2: Some(r2_from(&outcomes)),
        training_condition: TrainingCondition::Balanced,
        training_class_counts: counts,
        predictions,
    })
}

/// Ratio R² under the cross-validation folds: each held-out (folio, pair)
/// cell is predicted by the training mean of the folio's true class and
/// compared against the training global mean.
pub fn ratio_r2(panel: &CountPanel, labels: &[Currier], opts: &CvOptions) -> Result<f64> {
    Ok(r2_from(&run_cv(panel, labels, opts)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Train on the first ⌈N/2⌉ folios, predict the rest.
    Forward,
    /// Train on the last ⌊N/2⌋ folios, predict the first ⌈N/2⌉.
    Backward,
    /// Train on even positions, predict odd ones.
    EvenOdd,
}

pub fn spatial_split(panel: &CountPanel, labels: &[Currier], mode: SplitMode) -> Result<ValidationReport> {
    if panel.len() != labels.len() {
        return Err(Error::InvalidInput("panel and labels differ in length".into()));
    }
    check_labels(labels)?;
    let n = labels.len();
    let half = n.div_ceil(2);
    let (train, test): (Vec<usize>, Vec<usize>) = match mode {
        SplitMode::Forward => ((0..half).collect(), (half..n).collect()),
        SplitMode::Backward => ((half..n).collect(), (0..half).collect()),
        SplitMode::EvenOdd => (0..n).partition(|i| i % 2 == 0),
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData("spatial split needs at least two folios".into()));
    }
    let mut counts = [0usize; 2];
    for &i in &train {
        counts[labels[i].class_index()] += 1;
    }
    let minority = counts[0].min(counts[1]) as f64 / train.len() as f64;
    let condition = if counts.contains(&0) {
        TrainingCondition::SingleClass
    } else if minority < MIN_CLASS_FRACTION {
        TrainingCondition::Imbalanced
    } else {
        TrainingCondition::Balanced
    };

    let predictions: Vec<Prediction> = match fit_indices(panel, labels, &train) {
        Ok(model) => test.iter().map(|&i| predict(&model, &panel[i])).collect(),
        Err(Error::DegenerateTraining(msg)) => {
            log::warn!("spatial split {mode:?}: {msg}; predicting the training class");
            let only = if counts[0] > 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            let label = if counts[0] > 0 { Currier::A } else { Currier::B };
            vec![Prediction { label, posterior: only }; test.len()]
        }
        Err(e) => return Err(e),
    };
    let pred: Vec<usize> = predictions.iter().map(|p| p.label.class_index()).collect();
    let truth: Vec<usize> = test.iter().map(|&i| labels[i].class_index()).collect();
    let accuracy = pred.iter().zip(&truth).filter(|(a, b)| a == b).count() as f64 / test.len() as f64;
    Ok(ValidationReport {
        split: format!("{mode:?}").to_lowercase(),
        accuracy,
        ari: adjusted_rand_index(&pred, &truth)?,
        fold_accuracies: vec![accuracy],
        n_predictions: test.len(),
        permutation_p: None,
        r2: None,
        training_condition: condition,
        training_class_counts: counts,
        predictions: test
            .iter()
            .zip(&predictions)
            .map(|(&i, p)| FolioPrediction {
                index: i,
                truth: labels[i],
                predicted: p.label,
                posterior_a: p.posterior[0],
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationBaseline {
    pub p_value: f64,
    pub repeats_per_iteration: usize,
    pub null: NullDistribution,
}

/// Shuffles labels `iterations` times and reruns cross-validation with
/// `repeats` repeats each; p is the add-one fraction of shuffled accuracies
/// at or above `observed_accuracy`.
pub fn permutation_baseline(
    panel: &CountPanel,
    labels: &[Currier],
    observed_accuracy: f64,
    iterations: usize,
    repeats: usize,
    folds: usize,
    seed: u64,
) -> Result<PermutationBaseline> {
    check_cv(labels, folds)?;
    let cv = CvOptions {
        folds,
        repeats,
        seed: rng::child_seed(seed, u64::MAX),
    };
    let samples = shuffled_samples(
        |l: &[Currier]| {
            cross_validate(panel, l, &cv).map(|r| r.accuracy).unwrap_or(f64::NAN)
        },
        labels,
        iterations,
        seed,
    );
    let null = NullDistribution {
        samples,
        observed: observed_accuracy,
        seed,
    };
    Ok(PermutationBaseline {
        p_value: null.p_value(),
        repeats_per_iteration: repeats,
        null,
    })
}
