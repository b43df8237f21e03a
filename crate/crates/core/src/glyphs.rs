//! Glyph tokenization, character-pair counting and the folio × pair ratio
//! matrix that every downstream analysis consumes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Currier, Folio};
use crate::error::{Error, Result};
use crate::stats::ContingencyTable2x2;

pub const DEFAULT_MIN_COUNT: u64 = 20;

/// Multi-character glyphs, longest first so greedy matching picks them up.
const MULTI_GLYPHS: [&str; 6] = ["cfh", "ckh", "cph", "cth", "ch", "sh"];

/// Splits an EVA word into glyphs by greedy longest match.
pub fn tokenize(word: &str) -> Vec<&str> {
    let mut glyphs = Vec::with_capacity(word.len());
    let mut rest = word;
    while !rest.is_empty() {
        let len = MULTI_GLYPHS
            .iter()
            .find(|g| rest.starts_with(*g))
            .map(|g| g.len())
            .unwrap_or_else(|| rest.chars().next().map_or(1, char::len_utf8));
        glyphs.push(&rest[..len]);
        rest = &rest[len..];
    }
    glyphs
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSpec {
    pub name: String,
    pub symbol_a: String,
    pub symbol_b: String,
    #[serde(default)]
    pub rationale: String,
    #[serde(skip)]
    glyphs_a: Vec<String>,
    #[serde(skip)]
    glyphs_b: Vec<String>,
}

impl PairSpec {
    pub fn new(name: &str, symbol_a: &str, symbol_b: &str, rationale: &str) -> Result<Self> {
        let valid = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase());
        if !valid(symbol_a) || !valid(symbol_b) {
            return Err(Error::PairConfig(format!(
                "{name}: symbols must be non-empty EVA strings"
            )));
        }
        if symbol_a == symbol_b {
            return Err(Error::PairConfig(format!("{name}: symbols must differ")));
        }
        let split = |s: &str| tokenize(s).into_iter().map(str::to_string).collect();
        Ok(Self {
            name: name.to_string(),
            symbol_a: symbol_a.to_string(),
            symbol_b: symbol_b.to_string(),
            rationale: rationale.to_string(),
            glyphs_a: split(symbol_a),
            glyphs_b: split(symbol_b),
        })
    }

    /// Counts (symbol_a, symbol_b) occurrences in one word. Matches consume
    /// their glyphs and the longer symbol wins when both match at a position.
    pub fn count_word(&self, word: &str) -> (u64, u64) {
        self.count_glyphs(&tokenize(word))
    }

    /// [`PairSpec::count_word`] on an already tokenized word.
    pub fn count_glyphs(&self, glyphs: &[&str]) -> (u64, u64) {
        let matches = |sym: &[String], at: usize| {
            glyphs.len() - at >= sym.len() && sym.iter().zip(&glyphs[at..]).all(|(s, g)| s == g)
        };
        let (mut a, mut b) = (0, 0);
        let mut i = 0;
        while i < glyphs.len() {
            let ma = matches(&self.glyphs_a, i).then_some(self.glyphs_a.len());
            let mb = matches(&self.glyphs_b, i).then_some(self.glyphs_b.len());
            match (ma, mb) {
                (Some(la), Some(lb)) if lb > la => {
                    b += 1;
                    i += lb;
                }
                (Some(la), _) => {
                    a += 1;
                    i += la;
                }
                (None, Some(lb)) => {
                    b += 1;
                    i += lb;
                }
                (None, None) => i += 1,
            }
        }
        (a, b)
    }
}

#[derive(Debug, Deserialize)]
struct PairFile {
    pair: Vec<PairEntry>,
}

#[derive(Debug, Deserialize)]
struct PairEntry {
    name: String,
    a: String,
    b: String,
    #[serde(default)]
    rationale: String,
}

/// Parses a TOML pair configuration made of `[[pair]]` tables with keys
/// `name`, `a`, `b` and an optional `rationale`.
pub fn parse_pair_config(text: &str) -> Result<Vec<PairSpec>> {
    let file: PairFile = toml::from_str(text).map_err(|e| Error::PairConfig(e.to_string()))?;
    if file.pair.is_empty() {
        return Err(Error::PairConfig("no pairs defined".into()));
    }
    let pairs = file
        .pair
        .iter()
        .map(|p| PairSpec::new(&p.name, &p.a, &p.b, &p.rationale))
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<&str> = pairs.iter().map(|p| p.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::PairConfig("duplicate pair names".into()));
    }
    Ok(pairs)
}

pub const DEFAULT_PAIRS_TOML: &str = r#"
[[pair]]
name = "k/t"
a = "k"
b = "t"
rationale = "Gallows differing by stroke feature"

[[pair]]
name = "ch/sh"
a = "ch"
b = "sh"
rationale = "Bench-character variants"

[[pair]]
name = "d/l"
a = "d"
b = "l"
rationale = "Ascenders with minimal visual distinction"

[[pair]]
name = "f/p"
a = "f"
b = "p"
rationale = "Low-frequency gallows pair"

[[pair]]
name = "o/a"
a = "o"
b = "a"
rationale = "Round characters differing in closure"

[[pair]]
name = "e/ch"
a = "e"
b = "ch"
rationale = "Frequent word-initial tokens"

[[pair]]
name = "e/ee"
a = "e"
b = "ee"
rationale = "Single versus doubled form"

[[pair]]
name = "or/ar"
a = "or"
b = "ar"
rationale = "Round-character + r ligatures"

[[pair]]
name = "ol/al"
a = "ol"
b = "al"
rationale = "Round-character + l ligatures"

[[pair]]
name = "y/dy"
a = "y"
b = "dy"
rationale = "Common word-final forms"

[[pair]]
name = "s/r"
a = "s"
b = "r"
rationale = "Low-frequency pair"
"#;

/// The eleven standard pairs.
pub fn default_pairs() -> Vec<PairSpec> {
    parse_pair_config(DEFAULT_PAIRS_TOML).expect("built-in pair table is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub count_a: u64,
    pub count_b: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.count_a + self.count_b
    }

    pub fn qualifies(&self, threshold: u64) -> bool {
        self.total() >= threshold
    }

    pub fn ratio(&self) -> f64 {
        self.count_a as f64 / self.total() as f64
    }
}

pub fn count_pair(folio: &Folio, pair: &PairSpec) -> PairCounts {
    let (count_a, count_b) = folio
        .words
        .iter()
        .map(|w| pair.count_word(w))
        .fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
    PairCounts { count_a, count_b }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub folio_id: String,
    pub quire: Option<String>,
    pub currier: Currier,
}

/// Folio × pair counts with a qualification threshold. Entries whose
/// combined count is below `min_count` are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioMatrix {
    pub rows: Vec<RowMeta>,
    pub pair_names: Vec<String>,
    pub min_count: u64,
    counts: Vec<Vec<PairCounts>>,
}

impl RatioMatrix {
    pub fn from_counts(
        rows: Vec<RowMeta>,
        pair_names: Vec<String>,
        counts: Vec<Vec<PairCounts>>,
        min_count: u64,
    ) -> Result<Self> {
        if counts.len() != rows.len() || counts.iter().any(|r| r.len() != pair_names.len()) {
            return Err(Error::InvalidInput("count matrix shape mismatch".into()));
        }
        Ok(Self {
            rows,
            pair_names,
            min_count,
            counts,
        })
    }

    pub fn n_folios(&self) -> usize {
        self.rows.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.pair_names.len()
    }

    pub fn raw_counts(&self, folio: usize, pair: usize) -> PairCounts {
        self.counts[folio][pair]
    }

    /// Counts for a qualifying entry.
    pub fn counts(&self, folio: usize, pair: usize) -> Option<PairCounts> {
        let c = self.counts[folio][pair];
        c.qualifies(self.min_count.max(1)).then_some(c)
    }

    pub fn ratio(&self, folio: usize, pair: usize) -> Option<f64> {
        self.counts(folio, pair).map(|c| c.ratio())
    }

    pub fn labels(&self) -> Vec<Currier> {
        self.rows.iter().map(|r| r.currier).collect()
    }

    pub fn pair_index(&self, name: &str) -> Option<usize> {
        self.pair_names.iter().position(|p| p == name)
    }

    /// Qualifying `(count_a, total)` cells, folio-major; the form consumed by
    /// the Beta-Binomial models.
    pub fn count_panel(&self) -> CountPanel {
        (0..self.n_folios())
            .map(|i| {
                (0..self.n_pairs())
                    .map(|j| self.counts(i, j).map(|c| (c.count_a, c.total())))
                    .collect()
            })
            .collect()
    }

    /// Same matrix restricted to the given pair columns, in the given order.
    pub fn select_pairs(&self, keep: &[usize]) -> RatioMatrix {
        RatioMatrix {
            rows: self.rows.clone(),
            pair_names: keep.iter().map(|&j| self.pair_names[j].clone()).collect(),
            min_count: self.min_count,
            counts: self
                .counts
                .iter()
                .map(|r| keep.iter().map(|&j| r[j]).collect())
                .collect(),
        }
    }

    /// Same matrix with rows replaced, e.g. after relabeling.
    pub fn with_labels(&self, labels: &[Currier]) -> RatioMatrix {
        let mut m = self.clone();
        for (row, &l) in m.rows.iter_mut().zip(labels) {
            row.currier = l;
        }
        m
    }

    /// Language × variant totals over the qualifying folios of one pair.
    pub fn aggregate_table(&self, labels: &[Currier], pair: usize) -> Result<ContingencyTable2x2> {
        let mut cells = [[0u64; 2]; 2];
        let mut used = 0;
        for (i, label) in labels.iter().enumerate() {
            let (Some(c), true) = (self.counts(i, pair), label.is_labeled()) else {
                continue;
            };
            let row = label.class_index();
            cells[row][0] += c.count_a;
            cells[row][1] += c.count_b;
            used += 1;
        }
        if used == 0 {
            return Err(Error::InsufficientData(format!(
                "pair {} has no qualifying folios",
                self.pair_names[pair]
            )));
        }
        Ok(ContingencyTable2x2::new(cells))
    }

    /// Ratio TSV: folio, quire, label, one column per pair, `NA` when absent.
    pub fn write_ratios_tsv<W: Write>(&self, out: W) -> Result<()> {
        self.write_tsv(out, |c| format!("{:.6}", c.ratio()))
    }

    /// Counts TSV: same layout, cells are `count_a:count_b`, `NA` when absent.
    pub fn write_counts_tsv<W: Write>(&self, out: W) -> Result<()> {
        self.write_tsv(out, |c| format!("{}:{}", c.count_a, c.count_b))
    }

    fn write_tsv<W: Write>(&self, out: W, cell: impl Fn(PairCounts) -> String) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        let mut header = vec!["folio".to_string(), "quire".into(), "label".into()];
        header.extend(self.pair_names.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![
                row.folio_id.clone(),
                row.quire.clone().unwrap_or_else(|| "NA".into()),
                row.currier.to_string(),
            ];
            rec.extend((0..self.n_pairs()).map(|j| self.counts(i, j).map_or("NA".into(), &cell)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a counts TSV written by [`RatioMatrix::write_counts_tsv`].
    /// Absent cells come back as zero counts.
    pub fn read_counts_tsv<R: Read>(input: R, min_count: u64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().delimiter(b'\t').from_reader(input);
        let header = rdr.headers()?.clone();
        if header.len() < 3 {
            return Err(Error::parse(1, "counts header needs folio, quire, label"));
        }
        let pair_names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut counts = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = r + 2;
            if rec.len() != header.len() {
                return Err(Error::parse(line, "wrong number of columns"));
            }
            let quire = (&rec[1] != "NA").then(|| rec[1].to_string());
            rows.push(RowMeta {
                folio_id: rec[0].to_string(),
                quire,
                currier: Currier::from_code(&rec[2]),
            });
            let row = rec
                .iter()
                .skip(3)
                .map(|cell| {
                    if cell == "NA" {
                        return Ok(PairCounts { count_a: 0, count_b: 0 });
                    }
                    let (a, b) = cell
                        .split_once(':')
                        .ok_or_else(|| Error::parse(line, format!("bad count cell `{cell}`")))?;
                    let num = |s: &str| {
                        s.parse::<u64>()
                            .map_err(|_| Error::parse(line, format!("bad count cell `{cell}`")))
                    };
                    Ok(PairCounts { count_a: num(a)?, count_b: num(b)? })
                })
                .collect::<Result<Vec<_>>>()?;
            counts.push(row);
        }
        Self::from_counts(rows, pair_names, counts, min_count)
    }
}

/// Folio × pair `(successes, trials)` cells, `None` where the pair does not
/// qualify.
pub type CountPanel = Vec<Vec<Option<(u64, u64)>>>;

pub fn ratio_matrix(corpus: &Corpus, pairs: &[PairSpec], min_count: u64) -> RatioMatrix {
    let counts = corpus
        .folios
        .iter()
        .map(|f| {
            let mut row = vec![PairCounts { count_a: 0, count_b: 0 }; pairs.len()];
            for w in &f.words {
                let glyphs = tokenize(w);
                for (cell, p) in row.iter_mut().zip(pairs) {
                    let (a, b) = p.count_glyphs(&glyphs);
                    cell.count_a += a;
                    cell.count_b += b;
                }
            }
            row
        })
        .collect();
    let rows = corpus
        .folios
        .iter()
        .map(|f| RowMeta {
            folio_id: f.id.clone(),
            quire: f.quire.clone(),
            currier: f.currier,
        })
        .collect();
    RatioMatrix {
        rows,
        pair_names: pairs.iter().map(|p| p.name.clone()).collect(),
        min_count,
        counts,
    }
}
