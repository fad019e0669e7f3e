//! File formats: embedding matrices (binary `EMB1` and TSV), scored pair
//! datasets, and training checkpoints.

mod checkpoint;
mod embeddings;
mod pairs;

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, sidecar_path, Checkpoint, CHECKPOINT_VERSION,
};
pub use embeddings::{
    decode_binary, encode_binary, encode_tsv, load_embeddings, parse_tsv, save_embeddings,
    EmbeddingFormat, EmbeddingMatrix, BINARY_MAGIC,
};
pub use pairs::{load_pair_dataset, parse_pair_dataset, save_pair_dataset, Pair, PairDataset};

/// Parse and validation failures. Binary errors carry a byte offset, text
/// errors a 1-based line number.
#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic at byte 0: expected \"EMB1\", found {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("truncated header: file has {len} bytes, header needs 12")]
    TruncatedHeader { len: usize },

    #[error("invalid shape n={n}, d={d}: need n >= 1 and d >= 2")]
    InvalidShape { n: usize, d: usize },

    #[error(
        "truncated payload at byte {offset}: expected {expected} payload bytes, found {found}"
    )]
    TruncatedPayload {
        offset: usize,
        expected: usize,
        found: usize,
    },

    #[error("{extra} trailing bytes after payload at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("non-finite value at byte {offset}")]
    NonFiniteBinary { offset: usize },

    #[error("line {line}: non-finite value in column {column}")]
    NonFiniteTsv { line: usize, column: usize },

    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },

    #[error("line {line}: gold score {score} outside [0, 5]")]
    ScoreRange { line: usize, score: f64 },

    #[error("line {line}: index {index} out of range for {n} embeddings")]
    PairIndex { line: usize, index: usize, n: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),
}

/// Writes to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
