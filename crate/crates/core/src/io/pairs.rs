use std::fmt::Write as _;
use std::path::Path;

use super::{read_file, write_atomic, FormatError};
use crate::error::Result;

/// One scored sentence pair; indices address rows of an embedding matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub gold: f64,
}

/// Sentence pairs with gold similarity scores in `[0, 5]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairDataset {
    pairs: Vec<Pair>,
    /// Source line of each pair, for validation messages.
    lines: Vec<usize>,
}

impl PairDataset {
    pub fn new(pairs: Vec<Pair>) -> Result<Self> {
        for (i, p) in pairs.iter().enumerate() {
            check_score(i + 1, p.gold)?;
        }
        let lines = (1..=pairs.len()).collect();
        Ok(Self { pairs, lines })
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn gold(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.gold).collect()
    }

    /// Checks every index against an `n`-row matrix.
    pub fn validate_against(&self, n: usize) -> Result<()> {
        for (p, &line) in self.pairs.iter().zip(&self.lines) {
            for index in [p.a, p.b] {
                if index >= n {
                    return Err(FormatError::PairIndex { line, index, n }.into());
                }
            }
        }
        Ok(())
    }

    /// Sorted, deduplicated row indices referenced by any pair.
    pub fn referenced_rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.pairs.iter().flat_map(|p| [p.a, p.b]).collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }
}

fn check_score(line: usize, score: f64) -> Result<()> {
    if !(0.0..=5.0).contains(&score) {
        return Err(FormatError::ScoreRange { line, score }.into());
    }
    Ok(())
}

/// Parses `index_a \t index_b \t score` lines. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_pair_dataset(text: &str) -> Result<PairDataset> {
    let mut pairs = Vec::new();
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(FormatError::Parse {
                line,
                message: format!("expected 3 tab-separated columns, found {}", fields.len()),
            }
            .into());
        }
        let index = |s: &str| {
            s.trim().parse::<usize>().map_err(|_| FormatError::Parse {
                line,
                message: format!("bad index {s:?}"),
            })
        };
        let a = index(fields[0])?;
        let b = index(fields[1])?;
        let gold: f64 = fields[2].trim().parse().map_err(|_| FormatError::Parse {
            line,
            message: format!("bad score {:?}", fields[2]),
        })?;
        if !gold.is_finite() {
            return Err(FormatError::NonFiniteTsv { line, column: 3 }.into());
        }
        check_score(line, gold)?;
        pairs.push(Pair { a, b, gold });
        lines.push(line);
    }
    Ok(PairDataset { pairs, lines })
}

pub fn load_pair_dataset(path: impl AsRef<Path>) -> Result<PairDataset> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| FormatError::Parse {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    parse_pair_dataset(&text)
}

pub fn save_pair_dataset(ds: &PairDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for p in &ds.pairs {
        writeln!(out, "{}\t{}\t{}", p.a, p.b, p.gold).unwrap();
    }
    write_atomic(path.as_ref(), out.as_bytes())
}
