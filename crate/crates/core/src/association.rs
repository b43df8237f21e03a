//! Per-pair A/B association (Cramér's V on aggregate tables) against a
//! label-shuffle null.

use serde::{Deserialize, Serialize};

use crate::corpus::Currier;
use crate::error::{Error, Result};
use crate::glyphs::RatioMatrix;
use crate::stats::{cramers_v, permutation_test_multi, ContingencyTable2x2, NullDistribution};

pub const CATEGORICAL_V: f64 = 0.20;
pub const INTERMEDIATE_V: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Categorical,
    Intermediate,
    FreeVariation,
}

impl Regime {
    /// Categorical above 0.20, intermediate from 0.05, free variation below.
    pub fn from_v(v: f64) -> Self {
        if v > CATEGORICAL_V {
            Regime::Categorical
        } else if v >= INTERMEDIATE_V {
            Regime::Intermediate
        } else {
            Regime::FreeVariation
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAssociation {
    pub pair: String,
    pub v: f64,
    pub table: ContingencyTable2x2,
    pub shuffle_mean: f64,
    pub shuffle_p95: f64,
    pub percentile: f64,
    pub p_value: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub pairs: Vec<PairAssociation>,
    pub mean_v: f64,
    pub shuffle_mean: f64,
    pub shuffle_p95: f64,
    pub percentile: f64,
    pub p_value: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl AssociationReport {
    /// Pair names ordered by decreasing V (stable for ties).
    pub fn ranking(&self) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.pairs.len()).collect();
        idx.sort_by(|&a, &b| self.pairs[b].v.total_cmp(&self.pairs[a].v));
        idx.iter().map(|&i| self.pairs[i].pair.as_str()).collect()
    }
}

/// V for every pair followed by their mean.
pub(crate) fn all_v(matrix: &RatioMatrix, labels: &[Currier]) -> Vec<f64> {
    let mut vs: Vec<f64> = (0..matrix.n_pairs())
        .map(|j| matrix.aggregate_table(labels, j).map_or(0.0, |t| cramers_v(&t)))
        .collect();
    let mean = vs.iter().sum::<f64>() / vs.len() as f64;
    vs.push(mean);
    vs
}

/// Cramér's V for every pair plus the mean over pairs, each compared with
/// the same `iterations` shuffles of the folio labels. Unlabeled rows are
/// ignored.
pub fn association_test(matrix: &RatioMatrix, iterations: usize, seed: u64) -> Result<AssociationReport> {
    let keep: Vec<usize> = (0..matrix.n_folios())
        .filter(|&i| matrix.rows[i].currier.is_labeled())
        .collect();
    if keep.is_empty() || matrix.n_pairs() == 0 {
        return Err(Error::InsufficientData("association needs labeled folios and pairs".into()));
    }
    let labeled = RatioMatrix::from_counts(
        keep.iter().map(|&i| matrix.rows[i].clone()).collect(),
        matrix.pair_names.clone(),
        keep.iter()
            .map(|&i| (0..matrix.n_pairs()).map(|j| matrix.raw_counts(i, j)).collect())
            .collect(),
        matrix.min_count,
    )?;
    let labels = labeled.labels();
    let tables = (0..labeled.n_pairs())
        .map(|j| labeled.aggregate_table(&labels, j))
        .collect::<Result<Vec<_>>>()?;

    let nulls = permutation_test_multi(|l| all_v(&labeled, l), &labels, iterations, seed);
    let summary = |d: &NullDistribution| (d.mean(), d.quantile(0.95), d.percentile(), d.p_value());
    let pairs = labeled
        .pair_names
        .iter()
        .zip(&tables)
        .zip(&nulls)
        .map(|((name, table), d)| {
            let (shuffle_mean, shuffle_p95, percentile, p_value) = summary(d);
            PairAssociation {
                pair: name.clone(),
                v: d.observed,
                table: *table,
                shuffle_mean,
                shuffle_p95,
                percentile,
                p_value,
                regime: Regime::from_v(d.observed),
            }
        })
        .collect();
    let overall = nulls.last().expect("mean statistic");
    let (shuffle_mean, shuffle_p95, percentile, p_value) = summary(overall);
    Ok(AssociationReport {
        pairs,
        mean_v: overall.observed,
        shuffle_mean,
        shuffle_p95,
        percentile,
        p_value,
        iterations,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyphs::{PairCounts, RowMeta};

    fn matrix(rows: &[(Currier, u64, u64)]) -> RatioMatrix {
        RatioMatrix::from_counts(
            rows.iter()
                .enumerate()
                .map(|(i, (c, _, _))| RowMeta { folio_id: format!("f{i}r"), quire: None, currier: *c })
                .collect(),
            vec!["x/y".into()],
            rows.iter().map(|&(_, a, b)| vec![PairCounts { count_a: a, count_b: b }]).collect(),
            20,
        )
        .unwrap()
    }

    #[test]
    fn regimes() {
        assert_eq!(Regime::from_v(0.375), Regime::Categorical);
        assert_eq!(Regime::from_v(0.147), Regime::Intermediate);
        assert_eq!(Regime::from_v(0.052), Regime::Intermediate);
        assert_eq!(Regime::from_v(0.047), Regime::FreeVariation);
    }

    #[test]
    fn separated_labels_are_significant() {
        let mut rows = vec![(Currier::A, 40, 10); 10];
        rows.extend(vec![(Currier::B, 10, 40); 10]);
        rows.push((Currier::Unlabeled, 0, 50));
        let r = association_test(&matrix(&rows), 200, 1).unwrap();
        assert!((r.pairs[0].v - 0.6).abs() < 1e-12);
        assert_eq!(r.pairs[0].table.cells, [[400, 100], [100, 400]]);
        assert_eq!(r.p_value, 1.0 / 201.0);
        assert_eq!(r.percentile, 100.0);
        assert_eq!(r.mean_v, r.pairs[0].v);
    }

    #[test]
    fn deterministic() {
        let rows: Vec<_> = (0..30)
            .map(|i| (if i % 3 == 0 { Currier::B } else { Currier::A }, 20 + i, 30))
            .collect();
        let m = matrix(&rows);
        assert_eq!(association_test(&m, 100, 5).unwrap(), association_test(&m, 100, 5).unwrap());
    }
}
