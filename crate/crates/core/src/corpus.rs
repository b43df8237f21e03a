//! IVTFF ingestion.
//!
//! Only the subset of the format needed for glyph statistics is honoured:
//! page headers with `$K=V` page variables, locus lines, inline comments,
//! alternate readings and the word separators. Everything is reduced to an
//! ordered list of folios, each holding its cleaned EVA words.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Currier {
    A,
    B,
    Unlabeled,
}

impl Currier {
    pub fn from_code(code: &str) -> Self {
        match code.trim() {
            "A" => Currier::A,
            "B" => Currier::B,
            _ => Currier::Unlabeled,
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Currier::Unlabeled
    }

    /// 0 for A, 1 for B. Panics on unlabeled folios.
    pub fn class_index(self) -> usize {
        match self {
            Currier::A => 0,
            Currier::B => 1,
            Currier::Unlabeled => panic!("unlabeled folio has no class index"),
        }
    }

    pub fn from_class_index(i: usize) -> Self {
        if i == 0 {
            Currier::A
        } else {
            Currier::B
        }
    }
}

impl fmt::Display for Currier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Currier::A => "A",
            Currier::B => "B",
            Currier::Unlabeled => "-",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Folio {
    pub id: String,
    pub order_index: usize,
    pub quire: Option<String>,
    pub currier: Currier,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub folios: Vec<Folio>,
    /// Hex SHA-256 of the bytes the corpus was parsed from.
    pub source_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub source_digest: String,
    pub folios: usize,
    pub tokens: usize,
    pub labeled_a: usize,
    pub labeled_b: usize,
    pub unlabeled: usize,
}

impl Corpus {
    pub fn token_count(&self) -> usize {
        self.folios.iter().map(|f| f.words.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.folios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folios.is_empty()
    }

    pub fn labels(&self) -> Vec<Currier> {
        self.folios.iter().map(|f| f.currier).collect()
    }

    pub fn summary(&self) -> CorpusSummary {
        let count = |c| self.folios.iter().filter(|f| f.currier == c).count();
        CorpusSummary {
            source_digest: self.source_digest.clone(),
            folios: self.folios.len(),
            tokens: self.token_count(),
            labeled_a: count(Currier::A),
            labeled_b: count(Currier::B),
            unlabeled: count(Currier::Unlabeled),
        }
    }

    /// Keeps only folios labeled A or B, renumbering `order_index`.
    pub fn filter_labeled(&self) -> Corpus {
        let folios = self
            .folios
            .iter()
            .filter(|f| f.currier.is_labeled())
            .enumerate()
            .map(|(i, f)| Folio {
                order_index: i,
                ..f.clone()
            })
            .collect();
        Corpus {
            folios,
            source_digest: self.source_digest.clone(),
        }
    }

    /// Overrides quire and Currier label from a sidecar TSV with header
    /// `folio\tquire\tcurrier`. Folios not listed keep their parsed values.
    pub fn apply_metadata<R: Read>(&mut self, reader: R) -> Result<Vec<ParseWarning>> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["folio", "quire", "currier"];
        if headers.len() < 3 || headers.iter().take(3).zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(Error::parse(1, "metadata header must be folio\\tquire\\tcurrier"));
        }
        let mut warnings = Vec::new();
        let index: BTreeMap<String, usize> = self
            .folios
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.clone(), i))
            .collect();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let line = row + 2;
            let (Some(id), Some(quire), Some(currier)) = (record.get(0), record.get(1), record.get(2))
            else {
                return Err(Error::parse(line, "metadata row needs three columns"));
            };
            let Some(&i) = index.get(id.trim()) else {
                warnings.push(ParseWarning::new(line, format!("metadata for unknown folio {id}")));
                continue;
            };
            let quire = quire.trim();
            self.folios[i].quire = (!quire.is_empty() && quire != "NA").then(|| quire.to_string());
            self.folios[i].currier = Currier::from_code(currier);
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

impl ParseWarning {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Keep only locus lines whose `;X` transcriber code matches. Lines
    /// without a transcriber code are always kept.
    pub transcriber: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub corpus: Corpus,
    pub warnings: Vec<ParseWarning>,
}

pub fn digest(bytes: &[u8]) -> String {
    let hash = Sha256::digest(bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses IVTFF text, logging any warnings.
pub fn parse_ivtff(text: &str) -> Result<Corpus> {
    let outcome = parse_ivtff_with(text, &ParseOptions::default())?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    Ok(outcome.corpus)
}

pub fn parse_ivtff_with(text: &str, options: &ParseOptions) -> Result<ParseOutcome> {
    let mut folios: Vec<Folio> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut warnings = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        if !line.starts_with('<') {
            warnings.push(ParseWarning::new(line_no, "unrecognised line ignored"));
            continue;
        }
        let Some(close) = line.find('>') else {
            return Err(Error::parse(line_no, "unterminated tag"));
        };
        let tag = &line[1..close];
        let rest = &line[close + 1..];

        if tag.starts_with('!') {
            continue;
        }

        if let Some((page, locus)) = tag.split_once('.') {
            let Some(current) = folios.last_mut() else {
                return Err(Error::parse(line_no, "locus line before any page header"));
            };
            if page != current.id {
                return Err(Error::parse(
                    line_no,
                    format!("locus <{tag}> does not belong to page {}", current.id),
                ));
            }
            if let (Some(want), Some((_, who))) = (&options.transcriber, locus.split_once(';')) {
                if who != want {
                    continue;
                }
            }
            current.words.extend(clean_locus_text(rest, line_no, &mut warnings));
            continue;
        }

        if !is_page_id(tag) {
            return Err(Error::parse(line_no, format!("malformed page header <{tag}>")));
        }
        if !seen.insert(tag.to_string()) {
            return Err(Error::parse(line_no, format!("duplicate page header <{tag}>")));
        }
        let vars = parse_page_variables(rest, line_no, &mut warnings);
        folios.push(Folio {
            id: tag.to_string(),
            order_index: folios.len(),
            quire: vars.get(&'Q').cloned(),
            currier: vars.get(&'L').map_or(Currier::Unlabeled, |v| Currier::from_code(v)),
            words: Vec::new(),
        });
    }

    Ok(ParseOutcome {
        corpus: Corpus {
            folios,
            source_digest: digest(text.as_bytes()),
        },
        warnings,
    })
}

/// `f` + digits + `r|v` + optional digits (f1r, f85r2, f116v).
fn is_page_id(tag: &str) -> bool {
    let Some(body) = tag.strip_prefix('f') else {
        return false;
    };
    let digits = body.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return false;
    }
    let mut tail = body[digits..].chars();
    matches!(tail.next(), Some('r' | 'v')) && tail.all(|c| c.is_ascii_digit())
}

fn parse_page_variables(
    rest: &str,
    line_no: usize,
    warnings: &mut Vec<ParseWarning>,
) -> BTreeMap<char, String> {
    let mut vars = BTreeMap::new();
    for token in rest.split(|c: char| c.is_whitespace() || c == '>' || c == '<') {
        let Some(body) = token.strip_prefix('$') else {
            continue;
        };
        let mut chars = body.chars();
        match (chars.next(), chars.next(), chars.as_str()) {
            (Some(k), Some('='), v) if k.is_ascii_uppercase() && !v.is_empty() => {
                vars.insert(k, v.to_string());
            }
            _ => warnings.push(ParseWarning::new(
                line_no,
                format!("unreadable page variable `{token}` ignored"),
            )),
        }
    }
    vars
}

fn is_separator(c: char) -> bool {
    matches!(c, '.' | ',' | '=' | '-') || c.is_whitespace()
}

/// Reduces a locus text to clean EVA words.
pub(crate) fn clean_locus_text(
    text: &str,
    line_no: usize,
    warnings: &mut Vec<ParseWarning>,
) -> Vec<String> {
    let mut flat = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '<' => {
                // <!comment> vanishes, any other inline tag (<->, <$>, <%>) separates words.
                let comment = chars.peek() == Some(&'!');
                for d in chars.by_ref() {
                    if d == '>' {
                        break;
                    }
                }
                if !comment {
                    flat.push('.');
                }
            }
            '[' => {
                let mut body = String::new();
                for d in chars.by_ref() {
                    if d == ']' {
                        break;
                    }
                    body.push(d);
                }
                let first = body.split([':', '|']).next().unwrap_or("");
                flat.push_str(first);
            }
            '@' => {
                let mut code = String::new();
                while let Some(&d) = chars.peek() {
                    chars.next();
                    if d == ';' {
                        break;
                    }
                    code.push(d);
                }
                warnings.push(ParseWarning::new(
                    line_no,
                    format!("extended glyph code @{code}; dropped"),
                ));
            }
            '{' | '}' | '!' | '%' => {}
            _ => flat.push(c),
        }
    }

    let mut words = Vec::new();
    for word in flat.split(is_separator).filter(|w| !w.is_empty()) {
        if word.contains(['?', '*']) {
            continue;
        }
        if !word.chars().all(|c| c.is_ascii_lowercase()) {
            warnings.push(ParseWarning::new(
                line_no,
                format!("word `{word}` has non-EVA characters; dropped"),
            ));
            continue;
        }
        words.push(word.to_string());
    }
    words
}
