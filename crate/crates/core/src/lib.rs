//! Character-pair ratio analysis of EVA transcriptions of the Voynich
//! manuscript.
//!
//! The pipeline runs from an IVTFF transcription ([`corpus`]) through glyph
//! pair counts ([`glyphs`]) to the analyses: label-shuffle association
//! ([`association`]), boundary jumps ([`boundary`]), Markov null models
//! ([`simulate`]), clustering ([`cluster`]), an unsupervised Beta-Binomial
//! mixture ([`bbmix`]) and supervised predictive validation ([`classify`]).

pub mod association;
pub mod bbmix;
pub mod boundary;
pub mod classify;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod glyphs;
pub mod linalg;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod synthetic;

pub use association::{association_test, AssociationReport, Regime};
pub use bbmix::{fit_mixture, select_k, BetaBinomParams, FitOptions, MixtureFit};
pub use boundary::{boundary_report, measure_transitions, BoundaryReport, TransitionKind, TransitionRecord};
pub use classify::{cross_validate, spatial_split, CvOptions, SplitMode, ValidationReport};
pub use cluster::{prepare_features, Algorithm, ClusterResult, FeatureMatrix};
pub use corpus::{parse_ivtff, Corpus, Currier, Folio};
pub use error::{Error, Result};
pub use glyphs::{default_pairs, ratio_matrix, PairCounts, PairSpec, RatioMatrix};
pub use simulate::{run_single_markov, run_split_markov, SimOptions, SimulationSummary};
pub use stats::{ContingencyTable2x2, NullDistribution};
