//! Order-2 character Markov null models. Synthetic folios keep the real
//! folio's word count, quire and label; only the text is regenerated.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::association::all_v;
use crate::boundary::{boundary_gap, measure_transitions};
use crate::corpus::{Corpus, Currier, Folio};
use crate::error::{Error, Result};
use crate::glyphs::{ratio_matrix, PairSpec, RatioMatrix};
use crate::rng;
use crate::stats::{sample_variance, NullDistribution};

/// Word boundary symbol. EVA words never contain it.
pub const BOUNDARY: char = '#';
pub const MAX_WORD_LEN: usize = 50;
pub const DEFAULT_ITERATIONS: usize = 200;

type Context = (char, char);

/// Empirical order-2 model over raw characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovModel {
    /// Next-symbol counts per context, symbols in ascending order.
    transitions: BTreeMap<Context, Vec<(char, u64)>>,
    alphabet: Vec<char>,
}

impl MarkovModel {
    pub fn order(&self) -> usize {
        2
    }

    /// Characters of the training text plus [`BOUNDARY`].
    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn next_counts(&self, context: (char, char)) -> Option<&[(char, u64)]> {
        self.transitions.get(&context).map(Vec::as_slice)
    }

    pub fn contexts(&self) -> impl Iterator<Item = (char, char)> + '_ {
        self.transitions.keys().copied()
    }

    /// Draws the symbol following `context`, which must have been seen.
    pub fn sample_next(&self, context: (char, char), rng: &mut impl Rng) -> char {
        let next = &self.transitions[&context];
        let total: u64 = next.iter().map(|&(_, c)| c).sum();
        let mut u = rng.random_range(0..total);
        for &(ch, c) in next {
            if u < c {
                return ch;
            }
            u -= c;
        }
        unreachable!("draw below total")
    }

    /// One word; stops at the boundary symbol or after [`MAX_WORD_LEN`]
    /// characters.
    pub fn generate_word(&self, rng: &mut impl Rng) -> String {
        let mut word = String::new();
        let mut ctx = (BOUNDARY, BOUNDARY);
        for _ in 0..MAX_WORD_LEN {
            let ch = self.sample_next(ctx, rng);
            if ch == BOUNDARY {
                break;
            }
            word.push(ch);
            ctx = (ctx.1, ch);
        }
        word
    }
}

/// Counts transitions over the words of `folios`, each word padded with two
/// boundary symbols in front and one behind.
pub fn fit_markov<'a>(folios: impl IntoIterator<Item = &'a Folio>) -> Result<MarkovModel> {
    let mut counts: BTreeMap<Context, BTreeMap<char, u64>> = BTreeMap::new();
    let mut alphabet = std::collections::BTreeSet::from([BOUNDARY]);
    for word in folios.into_iter().flat_map(|f| &f.words) {
        if word.contains(BOUNDARY) {
            return Err(Error::InvalidInput(format!("word `{word}` contains the boundary symbol")));
        }
        let mut ctx = (BOUNDARY, BOUNDARY);
        for ch in word.chars().chain([BOUNDARY]) {
            *counts.entry(ctx).or_default().entry(ch).or_default() += 1;
            alphabet.insert(ch);
            ctx = (ctx.1, ch);
        }
    }
    if counts.is_empty() {
        return Err(Error::InsufficientData("no training words for the Markov model".into()));
    }
    Ok(MarkovModel {
        transitions: counts
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect(),
        alphabet: alphabet.into_iter().collect(),
    })
}

/// Synthetic copy of `template` with `n_words` generated words.
pub fn generate_folio(model: &MarkovModel, template: &Folio, n_words: usize, rng: &mut impl Rng) -> Folio {
    Folio {
        words: (0..n_words).map(|_| model.generate_word(rng)).collect(),
        ..template.clone()
    }
}

/// Generators used for a simulation: one model for every folio, or one
/// per language.
#[derive(Debug, Clone)]
pub enum ModelSet {
    Single(MarkovModel),
    Split { a: MarkovModel, b: MarkovModel },
}

impl ModelSet {
    fn for_label(&self, label: Currier) -> &MarkovModel {
        match (self, label) {
            (ModelSet::Single(m), _) => m,
            (ModelSet::Split { b, .. }, Currier::B) => b,
            (ModelSet::Split { a, .. }, _) => a,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ModelSet::Single(_) => "single",
            ModelSet::Split { .. } => "split",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub iterations: usize,
    pub seed: u64,
    pub min_count: u64,
}

/// Statistics compared between the real and each synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Sample variance of present ratios per pair; NaN below two folios.
    pub variances: Vec<f64>,
    pub mean_v: f64,
    pub gap: Option<f64>,
}

pub fn corpus_stats(matrix: &RatioMatrix) -> CorpusStats {
    let labels = matrix.labels();
    let variances = (0..matrix.n_pairs())
        .map(|j| {
            let r: Vec<f64> = (0..matrix.n_folios())
                .filter(|&i| labels[i].is_labeled())
                .filter_map(|i| matrix.ratio(i, j))
                .collect();
            sample_variance(&r)
        })
        .collect();
    CorpusStats {
        variances,
        mean_v: *all_v(matrix, &labels).last().expect("mean entry"),
        gap: boundary_gap(&measure_transitions(matrix)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVariance {
    pub pair: String,
    pub real: f64,
    pub simulated_mean: f64,
    pub simulated_max: f64,
    /// Share of iterations with a strictly smaller variance than the real
    /// one, in percent.
    pub percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub model: String,
    pub iterations: usize,
    pub seed: u64,
    pub variances: Vec<PairVariance>,
    pub mean_v: f64,
    pub mean_v_simulated_mean: f64,
    pub mean_v_percentile: f64,
    pub gap: Option<f64>,
    pub gap_simulated_mean: Option<f64>,
    /// Iterations whose gap reaches the real gap.
    pub gap_reached: usize,
    pub gap_percentile: Option<f64>,
    /// Written separately by [`SimulationSummary::write_iterations_tsv`].
    #[serde(skip)]
    pub per_iteration: Vec<CorpusStats>,
}

impl SimulationSummary {
    /// Pairs whose real variance exceeds every simulated one.
    pub fn pairs_at_100th(&self) -> usize {
        self.variances.iter().filter(|v| v.percentile == 100.0).count()
    }

    pub fn variance(&self, pair: &str) -> Option<&PairVariance> {
        self.variances.iter().find(|v| v.pair == pair)
    }

    /// Per-iteration dump: iteration, mean V, gap, one variance per pair.
    pub fn write_iterations_tsv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        let mut header = vec!["iteration".to_string(), "mean_v".into(), "gap".into()];
        header.extend(self.variances.iter().map(|v| format!("var_{}", v.pair)));
        w.write_record(&header)?;
        let fmt = |x: f64| if x.is_finite() { format!("{x:.6}") } else { "NA".into() };
        for (i, s) in self.per_iteration.iter().enumerate() {
            let mut rec = vec![i.to_string(), fmt(s.mean_v), s.gap.map_or("NA".into(), fmt)];
            rec.extend(s.variances.iter().map(|&v| fmt(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn null_of(samples: Vec<f64>, observed: f64, seed: u64) -> NullDistribution {
    NullDistribution { samples, observed, seed }
}

/// Regenerates every labeled folio of `corpus` from `models` in each
/// iteration (stream `i` of the seed) and locates the real statistics in
/// the simulated distributions.
pub fn run_with_models(corpus: &Corpus, models: &ModelSet, pairs: &[PairSpec], opts: &SimOptions) -> Result<SimulationSummary> {
    let real = corpus.filter_labeled();
    if real.is_empty() {
        return Err(Error::InsufficientData("simulation needs labeled folios".into()));
    }
    let observed = corpus_stats(&ratio_matrix(&real, pairs, opts.min_count));
    let per_iteration: Vec<CorpusStats> = (0..opts.iterations)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::derive(opts.seed, i as u64);
            let folios = real
                .folios
                .iter()
                .map(|f| generate_folio(models.for_label(f.currier), f, f.words.len(), &mut rng))
                .collect();
            let synthetic = Corpus { folios, source_digest: String::new() };
            corpus_stats(&ratio_matrix(&synthetic, pairs, opts.min_count))
        })
        .collect();

    let variances = pairs
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let sims: Vec<f64> = per_iteration.iter().map(|s| s.variances[j]).filter(|v| v.is_finite()).collect();
            let d = null_of(sims, observed.variances[j], opts.seed);
            PairVariance {
                pair: p.name.clone(),
                real: d.observed,
                simulated_mean: d.mean(),
                simulated_max: d.max(),
                percentile: d.percentile(),
            }
        })
        .collect();
    let v = null_of(per_iteration.iter().map(|s| s.mean_v).collect(), observed.mean_v, opts.seed);
    let gaps: Vec<f64> = per_iteration.iter().filter_map(|s| s.gap).collect();
    let gap = observed.gap.map(|g| null_of(gaps.clone(), g, opts.seed));
    Ok(SimulationSummary {
        model: models.name().into(),
        iterations: opts.iterations,
        seed: opts.seed,
        variances,
        mean_v: v.observed,
        mean_v_simulated_mean: v.mean(),
        mean_v_percentile: v.percentile(),
        gap: observed.gap,
        gap_simulated_mean: (!gaps.is_empty()).then(|| crate::stats::mean(&gaps)),
        gap_reached: gap.as_ref().map_or(0, |d| d.count_at_least(d.observed)),
        gap_percentile: gap.as_ref().map(|d| d.percentile()),
        per_iteration,
    })
}

/// One model trained on all labeled text.
pub fn run_single_markov(corpus: &Corpus, pairs: &[PairSpec], opts: &SimOptions) -> Result<SimulationSummary> {
    let labeled = corpus.filter_labeled();
    let model = fit_markov(&labeled.folios)?;
    run_with_models(corpus, &ModelSet::Single(model), pairs, opts)
}

/// Separate A and B models, each generating its own folios.
pub fn run_split_markov(corpus: &Corpus, pairs: &[PairSpec], opts: &SimOptions) -> Result<SimulationSummary> {
    let of = |c| fit_markov(corpus.folios.iter().filter(|f| f.currier == c));
    let (a, b) = (of(Currier::A), of(Currier::B));
    match (a, b) {
        (Ok(a), Ok(b)) => run_with_models(corpus, &ModelSet::Split { a, b }, pairs, opts),
        _ => Err(Error::InsufficientData("split model needs text in both languages".into())),
    }
}
