//! Hard 0/1 instance weights for negatives, decided by a complementary
//! scorer: a negative whose similarity to the anchor reaches `phi` in the
//! scorer's space is treated as a false negative and dropped.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{negative_refs, NegativeViews};
use crate::matrix::Matrix;
use crate::noise::NoiseBank;
use crate::similarity::cosine_sim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingMode {
    /// Precomputed reference embeddings aligned with the corpus.
    Reference,
    /// The model's own dropout-free representations, refreshed per batch.
    #[serde(rename = "self")]
    SelfModel,
    /// Every negative keeps weight 1.
    Off,
}

impl std::str::FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(Self::Reference),
            "self" => Ok(Self::SelfModel),
            "off" => Ok(Self::Off),
            other => Err(Error::Config(format!(
                "unknown weighting mode {other:?} (reference, self, off)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
enum Space {
    Reference(Matrix),
    /// Rows for a subset of corpus indices.
    Snapshot {
        rows: Matrix,
        lookup: HashMap<usize, usize>,
    },
}

#[derive(Debug, Clone)]
pub struct ComplementaryScorer {
    phi: f64,
    space: Space,
}

impl ComplementaryScorer {
    /// Scorer over a reference matrix whose row i represents corpus sentence i.
    pub fn reference(reference: Matrix, phi: f64) -> Result<Self> {
        check_phi(phi)?;
        Ok(Self {
            phi,
            space: Space::Reference(reference),
        })
    }

    /// Scorer over model representations `rows` of the corpus sentences `indices`.
    pub fn snapshot(indices: &[usize], rows: Matrix, phi: f64) -> Result<Self> {
        check_phi(phi)?;
        if indices.len() != rows.rows() {
            return Err(Error::Shape(format!(
                "{} indices for {} rows",
                indices.len(),
                rows.rows()
            )));
        }
        let lookup = indices.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        Ok(Self {
            phi,
            space: Space::Snapshot { rows, lookup },
        })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn dim(&self) -> usize {
        match &self.space {
            Space::Reference(m) | Space::Snapshot { rows: m, .. } => m.cols(),
        }
    }

    fn representation(&self, i: usize) -> Result<&[f64]> {
        match &self.space {
            Space::Reference(m) if i < m.rows() => Ok(m.row(i)),
            Space::Reference(m) => Err(Error::IndexOutOfRange {
                index: i,
                len: m.rows(),
            }),
            Space::Snapshot { rows, lookup } => {
                lookup
                    .get(&i)
                    .map(|&r| rows.row(r))
                    .ok_or(Error::IndexOutOfRange {
                        index: i,
                        len: rows.rows(),
                    })
            }
        }
    }

    /// Cosine between sentences i and j in the scorer's space.
    pub fn score_pair(&self, i: usize, j: usize) -> Result<f64> {
        cosine_sim(self.representation(i)?, self.representation(j)?)
    }

    /// Cosine between the scorer's representation of sentence i and a raw vector.
    pub fn score_noise(&self, i: usize, noise: &[f64]) -> Result<f64> {
        let rep = self.representation(i)?;
        if rep.len() != noise.len() {
            return Err(Error::Shape(format!(
                "scorer dimension {} != noise dimension {}",
                rep.len(),
                noise.len()
            )));
        }
        cosine_sim(rep, noise)
    }

    /// α for a negative with scorer similarity `sim`: kept iff `sim < phi`.
    #[inline]
    pub fn keeps(&self, sim: f64) -> bool {
        sim < self.phi
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if !phi.is_finite() {
        return Err(Error::Config(format!("phi must be finite, got {phi}")));
    }
    Ok(())
}

/// Binary weights, one row per anchor; columns are the in-batch negatives
/// in [`negative_refs`] order followed by the noise bank rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMask {
    anchors: usize,
    in_batch: usize,
    noise: usize,
    keep: Vec<bool>,
}

impl WeightMask {
    pub fn all_kept(anchors: usize, in_batch: usize, noise: usize) -> Self {
        Self {
            anchors,
            in_batch,
            noise,
            keep: vec![true; anchors * (in_batch + noise)],
        }
    }

    pub fn from_rows(rows: Vec<Vec<bool>>, in_batch: usize) -> Result<Self> {
        let cols = rows.first().map_or(in_batch, Vec::len);
        if cols < in_batch || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged or undersized weight mask".into()));
        }
        Ok(Self {
            anchors: rows.len(),
            in_batch,
            noise: cols - in_batch,
            keep: rows.concat(),
        })
    }

    pub fn anchors(&self) -> usize {
        self.anchors
    }

    pub fn in_batch(&self) -> usize {
        self.in_batch
    }

    pub fn noise(&self) -> usize {
        self.noise
    }

    pub fn cols(&self) -> usize {
        self.in_batch + self.noise
    }

    #[inline]
    pub fn keep(&self, anchor: usize, col: usize) -> bool {
        self.keep[anchor * self.cols() + col]
    }

    pub fn set(&mut self, anchor: usize, col: usize, keep: bool) {
        let cols = self.cols();
        self.keep[anchor * cols + col] = keep;
    }

    /// α as a number.
    pub fn alpha(&self, anchor: usize, col: usize) -> f64 {
        if self.keep(anchor, col) {
            1.0
        } else {
            0.0
        }
    }

    pub fn row(&self, anchor: usize) -> &[bool] {
        let cols = self.cols();
        &self.keep[anchor * cols..(anchor + 1) * cols]
    }

    /// Fraction of entries with α = 0; zero for an empty mask.
    pub fn masked_fraction(&self) -> f64 {
        if self.keep.is_empty() {
            return 0.0;
        }
        self.keep.iter().filter(|k| !**k).count() as f64 / self.keep.len() as f64
    }
}

/// Weights for every (anchor, negative) pair of a batch.
///
/// `anchor_indices[i]` is the corpus index of batch sentence i; in-batch
/// negatives inherit the index of the sentence whose view they are.
pub fn compute_weights(
    scorer: &ComplementaryScorer,
    anchor_indices: &[usize],
    views: NegativeViews,
    bank: Option<&NoiseBank>,
) -> Result<WeightMask> {
    let b = anchor_indices.len();
    let refs_len = negative_refs(b, 0, views).len();
    let m = bank.map_or(0, NoiseBank::len);
    let mut mask = WeightMask::all_kept(b, refs_len, m);
    for (i, &anchor) in anchor_indices.iter().enumerate() {
        for (c, r) in negative_refs(b, i, views).into_iter().enumerate() {
            let sim = scorer.score_pair(anchor, anchor_indices[r.sentence])?;
            mask.set(i, c, scorer.keeps(sim));
        }
        if let Some(bank) = bank {
            for (j, noise) in bank.vectors().iter_rows().enumerate() {
                let sim = scorer.score_noise(anchor, noise)?;
                mask.set(i, refs_len + j, scorer.keeps(sim));
            }
        }
    }
    Ok(mask)
}
