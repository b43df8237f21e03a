//! Ratio jumps between consecutive labeled folios, grouped by whether the
//! language, the quire, or both change.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::Result;
use crate::glyphs::{RatioMatrix, RowMeta};
use crate::stats::{group_diff_test, mean};

pub const DEFAULT_RESAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransitionKind {
    Same,
    QuireOnly,
    LangOnly,
    LangPlusQuire,
}

impl TransitionKind {
    pub const ALL: [TransitionKind; 4] = [
        TransitionKind::Same,
        TransitionKind::QuireOnly,
        TransitionKind::LangOnly,
        TransitionKind::LangPlusQuire,
    ];

    pub fn of(lang_changes: bool, quire_changes: bool) -> Self {
        match (lang_changes, quire_changes) {
            (false, false) => TransitionKind::Same,
            (false, true) => TransitionKind::QuireOnly,
            (true, false) => TransitionKind::LangOnly,
            (true, true) => TransitionKind::LangPlusQuire,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TransitionKind::Same => "SAME",
            TransitionKind::QuireOnly => "QUIRE_ONLY",
            TransitionKind::LangOnly => "LANG_ONLY",
            TransitionKind::LangPlusQuire => "LANG_PLUS_QUIRE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from_folio: String,
    pub to_folio: String,
    pub kind: TransitionKind,
    pub jump: Option<f64>,
    pub n_pairs_used: usize,
    /// One side has no quire; `kind` then reflects the language only.
    pub quire_unknown: bool,
}

impl TransitionRecord {
    /// Counted in the report: has a jump and a known quire on both sides.
    pub fn usable(&self) -> bool {
        self.jump.is_some() && !self.quire_unknown
    }
}

fn classify(from: &RowMeta, to: &RowMeta) -> TransitionRecord {
    let lang = from.currier != to.currier;
    let (quire, unknown) = match (&from.quire, &to.quire) {
        (Some(a), Some(b)) => (a != b, false),
        _ => (false, true),
    };
    TransitionRecord {
        from_folio: from.folio_id.clone(),
        to_folio: to.folio_id.clone(),
        kind: TransitionKind::of(lang, quire),
        jump: None,
        n_pairs_used: 0,
        quire_unknown: unknown,
    }
}

fn labeled_adjacent(rows: &[RowMeta]) -> Vec<(usize, usize)> {
    let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].currier.is_labeled()).collect();
    idx.windows(2).map(|w| (w[0], w[1])).collect()
}

/// One record per adjacent pair of labeled folios in manuscript order,
/// without jumps.
pub fn classify_transitions(corpus: &Corpus) -> Vec<TransitionRecord> {
    let rows: Vec<RowMeta> = corpus
        .folios
        .iter()
        .map(|f| RowMeta { folio_id: f.id.clone(), quire: f.quire.clone(), currier: f.currier })
        .collect();
    labeled_adjacent(&rows)
        .into_iter()
        .map(|(i, j)| classify(&rows[i], &rows[j]))
        .collect()
}

/// Mean `|r_to − r_from|` over pairs qualifying in both rows, with the
/// number of such pairs. `None` when no pair is shared.
pub fn jump_magnitude(matrix: &RatioMatrix, from: usize, to: usize) -> (Option<f64>, usize) {
    let diffs: Vec<f64> = (0..matrix.n_pairs())
        .filter_map(|j| Some((matrix.ratio(to, j)? - matrix.ratio(from, j)?).abs()))
        .collect();
    if diffs.is_empty() {
        (None, 0)
    } else {
        (Some(mean(&diffs)), diffs.len())
    }
}

/// Classified transitions of the matrix rows with their jumps.
pub fn measure_transitions(matrix: &RatioMatrix) -> Vec<TransitionRecord> {
    labeled_adjacent(&matrix.rows)
        .into_iter()
        .map(|(i, j)| {
            let mut rec = classify(&matrix.rows[i], &matrix.rows[j]);
            (rec.jump, rec.n_pairs_used) = jump_magnitude(matrix, i, j);
            rec
        })
        .collect()
}

fn jumps_of(records: &[TransitionRecord], kind: TransitionKind) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.usable() && r.kind == kind)
        .filter_map(|r| r.jump)
        .collect()
}

/// Mean LANG_ONLY jump minus mean SAME jump over usable transitions.
pub fn boundary_gap(records: &[TransitionRecord]) -> Option<f64> {
    let lang = jumps_of(records, TransitionKind::LangOnly);
    let same = jumps_of(records, TransitionKind::Same);
    (!lang.is_empty() && !same.is_empty()).then(|| mean(&lang) - mean(&same))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub kind: TransitionKind,
    pub count: usize,
    pub mean_jump: Option<f64>,
    /// One-sided p-value for a larger mean jump than SAME.
    pub p_value: Option<f64>,
    pub exhaustive: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub types: Vec<TypeSummary>,
    pub adjacencies: usize,
    pub usable: usize,
    pub excluded_no_shared_pairs: usize,
    pub excluded_quire_unknown: usize,
    pub gap: Option<f64>,
    pub resamples: usize,
    pub seed: u64,
}

impl BoundaryReport {
    pub fn get(&self, kind: TransitionKind) -> &TypeSummary {
        self.types.iter().find(|t| t.kind == kind).expect("every kind present")
    }
}

/// Per-type counts and mean jumps, and permutation p-values of each
/// boundary type against SAME. Transitions without shared pairs or with an
/// unknown quire are excluded.
pub fn boundary_report(records: &[TransitionRecord], resamples: usize, seed: u64) -> Result<BoundaryReport> {
    let same = jumps_of(records, TransitionKind::Same);
    let mut types = Vec::new();
    for (t, kind) in TransitionKind::ALL.into_iter().enumerate() {
        let jumps = jumps_of(records, kind);
        let mean_jump = (!jumps.is_empty()).then(|| mean(&jumps));
        let test = if kind == TransitionKind::Same || jumps.is_empty() || same.is_empty() {
            None
        } else {
            Some(group_diff_test(&same, &jumps, resamples, crate::rng::child_seed(seed, t as u64))?)
        };
        types.push(TypeSummary {
            kind,
            count: jumps.len(),
            mean_jump,
            p_value: test.map(|r| r.p_value),
            exhaustive: test.map(|r| r.exhaustive),
        });
    }
    Ok(BoundaryReport {
        types,
        adjacencies: records.len(),
        usable: records.iter().filter(|r| r.usable()).count(),
        excluded_no_shared_pairs: records.iter().filter(|r| r.jump.is_none()).count(),
        excluded_quire_unknown: records.iter().filter(|r| r.jump.is_some() && r.quire_unknown).count(),
        gap: boundary_gap(records),
        resamples,
        seed,
    })
}

/// Transition table: from, to, type, jump, n_pairs_used, quire_unknown.
pub fn write_transitions_tsv<W: Write>(records: &[TransitionRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    w.write_record(["from", "to", "type", "jump", "n_pairs_used", "quire_unknown"])?;
    for r in records {
        w.write_record([
            r.from_folio.as_str(),
            &r.to_folio,
            r.kind.as_str(),
            &r.jump.map_or("NA".into(), |j| format!("{j:.6}")),
            &r.n_pairs_used.to_string(),
            if r.quire_unknown { "1" } else { "0" },
        ])?;
    }
    w.flush()?;
    Ok(())
}
