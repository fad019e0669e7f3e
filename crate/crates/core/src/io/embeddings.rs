use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{read_file, write_atomic, FormatError};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const BINARY_MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    /// `EMB1`, u32 LE n, u32 LE d, then n·d f32 LE row-major.
    Binary,
    /// One row per line, tab-separated decimals.
    Tsv,
    /// As `Tsv`, with a leading string id column.
    TsvWithIds,
}

impl EmbeddingFormat {
    /// `.tsv`/`.txt` select TSV, everything else binary.
    pub fn from_path(path: &Path, with_ids: bool) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") if with_ids => Self::TsvWithIds,
            Some("tsv") | Some("txt") => Self::Tsv,
            _ => Self::Binary,
        }
    }
}

/// n×d matrix of sentence embeddings in 32-bit storage.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f32>,
    ids: Option<Vec<String>>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f32>, ids: Option<Vec<String>>) -> Result<Self> {
        if n < 1 || d < 2 {
            return Err(FormatError::InvalidShape { n, d }.into());
        }
        if data.len() != n * d {
            return Err(Error::Shape(format!(
                "{} values for a {n}x{d} embedding matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        if let Some(ids) = &ids {
            if ids.len() != n {
                return Err(Error::Shape(format!("{} ids for {n} rows", ids.len())));
            }
            let mut seen = HashSet::with_capacity(n);
            for (i, id) in ids.iter().enumerate() {
                if !seen.insert(id.as_str()) {
                    return Err(FormatError::DuplicateId {
                        line: i + 1,
                        id: id.clone(),
                    }
                    .into());
                }
            }
        }
        Ok(Self { n, d, data, ids })
    }

    /// Narrows an f64 matrix to f32 storage.
    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        Self::new(
            m.rows(),
            m.cols(),
            m.as_slice().iter().map(|&v| v as f32).collect(),
            None,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        let data = std::mem::take(&mut self.data);
        Self::new(self.n, self.d, data, Some(ids))
    }

    /// Widens to the f64 working representation.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.n,
            self.d,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("shape checked at construction")
    }
}

pub fn encode_binary(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.data.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(m.n as u32).to_le_bytes());
    out.extend_from_slice(&(m.d as u32).to_le_bytes());
    for v in &m.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < 4 || &bytes[..4] != BINARY_MAGIC {
        return Err(FormatError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        }
        .into());
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::TruncatedHeader { len: bytes.len() }.into());
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if n < 1 || d < 2 {
        return Err(FormatError::InvalidShape { n, d }.into());
    }
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or(FormatError::InvalidShape { n, d })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(FormatError::TruncatedPayload {
            offset: HEADER_LEN,
            expected,
            found: payload.len(),
        }
        .into());
    }
    if payload.len() > expected {
        return Err(FormatError::TrailingBytes {
            offset: HEADER_LEN + expected,
            extra: payload.len() - expected,
        }
        .into());
    }
    let mut data = Vec::with_capacity(n * d);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(FormatError::NonFiniteBinary {
                offset: HEADER_LEN + 4 * i,
            }
            .into());
        }
        data.push(v);
    }
    EmbeddingMatrix::new(n, d, data, None)
}

/// Values are written with the shortest decimal that round-trips an f32
/// (at most 9 significant digits).
pub fn encode_tsv(m: &EmbeddingMatrix, with_ids: bool) -> String {
    let mut out = String::new();
    for i in 0..m.n {
        if with_ids {
            match &m.ids {
                Some(ids) => out.push_str(&ids[i]),
                None => write!(out, "{i}").unwrap(),
            }
            out.push('\t');
        }
        for (j, v) in m.row(i).iter().enumerate() {
            if j > 0 {
                out.push('\t');
            }
            write!(out, "{v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_tsv(text: &str, with_ids: bool) -> Result<EmbeddingMatrix> {
    let mut data = Vec::new();
    let mut ids = with_ids.then(Vec::new);
    let mut d: Option<usize> = None;
    let mut n = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split('\t');
        if let Some(ids) = ids.as_mut() {
            let id = fields.next().unwrap_or_default().trim();
            if id.is_empty() {
                return Err(FormatError::Parse {
                    line,
                    message: "missing id column".into(),
                }
                .into());
            }
            ids.push(id.to_string());
        }
        let mut count = 0;
        for (column, field) in fields.enumerate() {
            let v: f32 = field.trim().parse().map_err(|_| FormatError::Parse {
                line,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(FormatError::NonFiniteTsv {
                    line,
                    column: column + 1,
                }
                .into());
            }
            data.push(v);
            count += 1;
        }
        match d {
            None => d = Some(count),
            Some(expected) if expected != count => {
                return Err(FormatError::DimensionMismatch {
                    line,
                    expected,
                    found: count,
                }
                .into())
            }
            _ => {}
        }
        n += 1;
    }
    let d = d.ok_or(FormatError::Empty("no embedding rows"))?;
    if let Some(ids) = &ids {
        let mut seen = HashSet::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if !seen.insert(id) {
                return Err(FormatError::DuplicateId {
                    line: i + 1,
                    id: id.clone(),
                }
                .into());
            }
        }
    }
    EmbeddingMatrix::new(n, d, data, ids)
}

pub fn load_embeddings(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    match format {
        EmbeddingFormat::Binary => decode_binary(&bytes),
        EmbeddingFormat::Tsv | EmbeddingFormat::TsvWithIds => {
            let text = String::from_utf8(bytes).map_err(|e| FormatError::Parse {
                line: 0,
                message: format!("not UTF-8: {e}"),
            })?;
            parse_tsv(&text, format == EmbeddingFormat::TsvWithIds)
        }
    }
}

/// Binary output carries no ids.
pub fn save_embeddings(
    m: &EmbeddingMatrix,
    path: impl AsRef<Path>,
    format: EmbeddingFormat,
) -> Result<()> {
    let bytes = match format {
        EmbeddingFormat::Binary => encode_binary(m),
        EmbeddingFormat::Tsv => encode_tsv(m, false).into_bytes(),
        EmbeddingFormat::TsvWithIds => encode_tsv(m, true).into_bytes(),
    };
    write_atomic(path.as_ref(), &bytes)
}
