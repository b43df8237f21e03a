//! Synthetic IVTFF transcriptions with controllable A/B regimes, for tests,
//! benchmarks and calibration runs.
//!
//! Each folio draws a variant probability per pair from a Beta around its
//! language's mean; words are built from one to three pair symbols joined by
//! `i`, which belongs to no pair.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::corpus::{parse_ivtff, Corpus, Currier};
use crate::error::Result;
use crate::glyphs::PairSpec;
use crate::rng;

/// Per-pair A−B difference in variant probability, in the default pair
/// order. Four strongly split pairs, a few mild ones, the rest flat.
pub const TWO_REGIME_SHIFTS: [f64; 11] = [0.06, 0.03, 0.40, 0.05, 0.0, 0.0, 0.25, 0.35, 0.16, 0.06, 0.26];
const BASE_RATES: [f64; 11] = [0.6, 0.7, 0.5, 0.55, 0.5, 0.4, 0.6, 0.5, 0.45, 0.6, 0.5];

#[derive(Debug, Clone)]
pub struct SyntheticOptions {
    pub folios: usize,
    pub words_per_folio: (usize, usize),
    pub folios_per_quire: usize,
    /// Language runs have lengths drawn uniformly from this range.
    pub run_length: (usize, usize),
    /// A−B shift per pair; missing entries are 0.
    pub shifts: Vec<f64>,
    /// Beta concentration of the per-folio variant probabilities.
    pub concentration: f64,
    pub seed: u64,
}

impl SyntheticOptions {
    pub fn two_regime(seed: u64) -> Self {
        Self {
            folios: 185,
            words_per_folio: (120, 320),
            folios_per_quire: 8,
            run_length: (4, 12),
            shifts: TWO_REGIME_SHIFTS.to_vec(),
            concentration: 40.0,
            seed,
        }
    }

    pub fn single_regime(seed: u64) -> Self {
        Self {
            shifts: Vec::new(),
            ..Self::two_regime(seed)
        }
    }
}

fn quire_name(q: usize) -> String {
    let letter = (b'A' + (q % 26) as u8) as char;
    if q < 26 {
        letter.to_string()
    } else {
        format!("{letter}{}", q / 26)
    }
}

fn folio_name(i: usize) -> String {
    format!("f{}{}", i / 2 + 1, if i % 2 == 0 { 'r' } else { 'v' })
}

/// IVTFF text for a synthetic manuscript.
pub fn synthetic_ivtff(opts: &SyntheticOptions, pairs: &[PairSpec]) -> String {
    let mut rng = rng::derive(opts.seed, 0);
    let mut out = String::from("#=IVTFF Eva- 2.0\n");
    let mut lang = Currier::A;
    let mut left_in_run = rng.random_range(opts.run_length.0..=opts.run_length.1);
    for i in 0..opts.folios {
        if left_in_run == 0 {
            lang = if lang == Currier::A { Currier::B } else { Currier::A };
            left_in_run = rng.random_range(opts.run_length.0..=opts.run_length.1);
        }
        left_in_run -= 1;

        let q: Vec<f64> = pairs
            .iter()
            .enumerate()
            .map(|(j, _)| {
                let base = BASE_RATES[j % BASE_RATES.len()];
                let half = opts.shifts.get(j).copied().unwrap_or(0.0) / 2.0;
                let mean = if lang == Currier::A { base + half } else { base - half };
                let mean = mean.clamp(0.02, 0.98);
                Beta::new(mean * opts.concentration, (1.0 - mean) * opts.concentration)
                    .expect("positive shape")
                    .sample(&mut rng)
            })
            .collect();

        let id = folio_name(i);
        let _ = writeln!(out, "<{id}>      <! $Q={} $L={lang}>", quire_name(i / opts.folios_per_quire));
        let n_words = rng.random_range(opts.words_per_folio.0..=opts.words_per_folio.1);
        let words: Vec<String> = (0..n_words)
            .map(|_| {
                let slots = rng.random_range(1..=3);
                (0..slots)
                    .map(|_| {
                        let j = rng.random_range(0..pairs.len());
                        let p = &pairs[j];
                        if rng.random_bool(q[j]) { p.symbol_a.clone() } else { p.symbol_b.clone() }
                    })
                    .collect::<Vec<_>>()
                    .join("i")
            })
            .collect();
        for (line, chunk) in words.chunks(10).enumerate() {
            let _ = writeln!(out, "<{id}.{},@P0>   {}", line + 1, chunk.join("."));
        }
    }
    out
}

pub fn synthetic_corpus(opts: &SyntheticOptions, pairs: &[PairSpec]) -> Result<Corpus> {
    parse_ivtff(&synthetic_ivtff(opts, pairs))
}
