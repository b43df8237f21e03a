use std::collections::BTreeMap;
use std::path::PathBuf;

use currier_core::rng::child_seed;
use serde::Serialize;

/// Stage names in execution order; the index doubles as the seed slot.
pub const STAGES: [&str; 8] = [
    "parse",
    "association",
    "boundary",
    "mixture",
    "validate",
    "simulate_single",
    "simulate_split",
    "cluster",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Iterations {
    pub association_shuffles: usize,
    pub boundary_resamples: usize,
    pub markov_iterations: usize,
    pub cv_folds: usize,
    pub cv_repeats: usize,
    pub cv_permutations: usize,
    pub cv_permutation_repeats: usize,
    pub mixture_restarts: usize,
    pub cluster_restarts: usize,
    pub cluster_permutations: usize,
}

impl Iterations {
    pub fn full() -> Self {
        Self {
            association_shuffles: 1000,
            boundary_resamples: 100_000,
            markov_iterations: 200,
            cv_folds: 5,
            cv_repeats: 20,
            cv_permutations: 500,
            cv_permutation_repeats: 5,
            mixture_restarts: 10,
            cluster_restarts: currier_core::cluster::DEFAULT_RESTARTS,
            cluster_permutations: 1000,
        }
    }

    /// Resampling counts at 10%; restarts and fold counts unchanged.
    pub fn fast() -> Self {
        let full = Self::full();
        let tenth = |n: usize| (n / 10).max(1);
        Self {
            association_shuffles: tenth(full.association_shuffles),
            boundary_resamples: tenth(full.boundary_resamples),
            markov_iterations: tenth(full.markov_iterations),
            cv_repeats: tenth(full.cv_repeats),
            cv_permutations: tenth(full.cv_permutations),
            cluster_permutations: tenth(full.cluster_permutations),
            ..full
        }
    }

    /// Sets every resampling count to `n`.
    pub fn override_all(&mut self, n: usize) {
        self.association_shuffles = n;
        self.boundary_resamples = n;
        self.markov_iterations = n;
        self.cv_permutations = n;
        self.cluster_permutations = n;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub metadata: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub min_count: u64,
    pub seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub iterations: Iterations,
    pub fast: bool,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

impl RunConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        input: PathBuf,
        metadata: Option<PathBuf>,
        pairs: Option<PathBuf>,
        min_count: u64,
        seed: u64,
        iterations: Option<usize>,
        fast: bool,
        threads: Option<usize>,
        out: PathBuf,
    ) -> Self {
        let mut its = if fast { Iterations::fast() } else { Iterations::full() };
        if let Some(n) = iterations {
            its.override_all(n);
        }
        let seeds = STAGES
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != "parse")
            .map(|(i, s)| (s.to_string(), child_seed(seed, i as u64)))
            .collect();
        Self {
            input,
            metadata,
            pairs,
            min_count,
            seed,
            seeds,
            iterations: its,
            fast,
            threads,
            out,
        }
    }

    pub fn seed_for(&self, stage: &str) -> u64 {
        self.seeds[stage]
    }
}
