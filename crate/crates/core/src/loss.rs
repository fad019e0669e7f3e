//! Debiased contrastive loss over dropout views, weighted in-batch
//! negatives, and a noise bank.
//!
//! For anchor i with positive h⁺ and kept negatives N_i:
//!
//! ```text
//! L_i = −s(h_i, h_i⁺) + log( e^{s(h_i, h_i⁺)} + Σ_{n ∈ N_i} e^{s(h_i, n)} ),   s = cos/τ
//! ```
//!
//! averaged over the batch. [`Denominator::Literal`] drops the positive term
//! from the denominator and guards it with [`LITERAL_GUARD`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::similarity::{add_cosine_grad_b, cosine_sim, logsumexp};
use crate::weighting::WeightMask;

pub const LITERAL_GUARD: f64 = 1e-12;

/// Which views of the other sentences serve as in-batch negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeViews {
    /// Both dropout views of every other sentence: 2(B−1) negatives.
    #[default]
    Both,
    /// Only the second (positive) view of every other sentence: B−1 negatives.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    #[default]
    WithPositive,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Anchor,
    Positive,
}

/// One row of the 2B×d view matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewRef {
    pub sentence: usize,
    pub view: View,
}

/// In-batch negatives of anchor `i` in a batch of `b` sentences, excluding
/// both views of sentence i. Empty when `b == 1`.
pub fn negative_refs(b: usize, i: usize, views: NegativeViews) -> Vec<ViewRef> {
    let others = (0..b).filter(move |&j| j != i);
    let first = match views {
        NegativeViews::Both => Some(others.clone().map(|sentence| ViewRef {
            sentence,
            view: View::Anchor,
        })),
        NegativeViews::Single => None,
    };
    first
        .into_iter()
        .flatten()
        .chain(others.map(|sentence| ViewRef {
            sentence,
            view: View::Positive,
        }))
        .collect()
}

/// Gathers the negative rows of anchor `i` from the two view matrices.
pub fn in_batch_negatives(
    anchors: &Matrix,
    positives: &Matrix,
    i: usize,
    views: NegativeViews,
) -> Result<Matrix> {
    if anchors.rows() != positives.rows() || i >= anchors.rows() {
        return Err(Error::Shape(format!(
            "anchor {i} of a {}/{} row view pair",
            anchors.rows(),
            positives.rows()
        )));
    }
    let rows: Vec<Vec<f64>> = negative_refs(anchors.rows(), i, views)
        .into_iter()
        .map(|r| match r.view {
            View::Anchor => anchors.row(r.sentence).to_vec(),
            View::Positive => positives.row(r.sentence).to_vec(),
        })
        .collect();
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, anchors.cols()));
    }
    Matrix::from_rows(&rows)
}

pub struct LossBatch<'a> {
    pub anchors: &'a Matrix,
    pub positives: &'a Matrix,
    pub bank: Option<&'a Matrix>,
    pub mask: &'a WeightMask,
    pub tau: f64,
    pub views: NegativeViews,
    pub denominator: Denominator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    pub anchors: Matrix,
    pub positives: Matrix,
}

impl LossBatch<'_> {
    fn validate(&self) -> Result<()> {
        let (b, d) = (self.anchors.rows(), self.anchors.cols());
        if b == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if self.positives.rows() != b || self.positives.cols() != d {
            return Err(Error::Shape("anchors and positives differ in shape".into()));
        }
        let m = self.bank.map_or(0, Matrix::rows);
        if let Some(bank) = self.bank {
            if bank.cols() != d {
                return Err(Error::Shape(format!(
                    "noise dimension {} != {d}",
                    bank.cols()
                )));
            }
        }
        let in_batch = negative_refs(b, 0, self.views).len();
        if self.mask.anchors() != b || self.mask.in_batch() != in_batch || self.mask.noise() != m {
            return Err(Error::Shape(format!(
                "weight mask {}x({}+{}) does not match batch {b}x({in_batch}+{m})",
                self.mask.anchors(),
                self.mask.in_batch(),
                self.mask.noise()
            )));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        Ok(())
    }

    fn view_row(&self, r: ViewRef) -> &[f64] {
        match r.view {
            View::Anchor => self.anchors.row(r.sentence),
            View::Positive => self.positives.row(r.sentence),
        }
    }

    /// Kept negatives of anchor i, in mask column order.
    fn kept_negatives(&self, i: usize) -> Vec<(Negative, &[f64])> {
        let b = self.anchors.rows();
        let refs = negative_refs(b, i, self.views);
        let n_refs = refs.len();
        let mut out: Vec<(Negative, &[f64])> = refs
            .into_iter()
            .enumerate()
            .filter(|(c, _)| self.mask.keep(i, *c))
            .map(|(_, r)| (Negative::InBatch(r), self.view_row(r)))
            .collect();
        if let Some(bank) = self.bank {
            out.extend(
                bank.iter_rows()
                    .enumerate()
                    .filter(|(j, _)| self.mask.keep(i, n_refs + j))
                    .map(|(_, row)| (Negative::Noise, row)),
            );
        }
        out
    }

    /// Per-anchor loss and, for each kept negative and the positive,
    /// ∂L_i/∂score.
    fn anchor_term(&self, i: usize) -> Result<AnchorTerm<'_>> {
        let h = self.anchors.row(i);
        let positive = cosine_sim(h, self.positives.row(i))? / self.tau;
        let negatives = self.kept_negatives(i);
        let scores: Vec<f64> = negatives
            .iter()
            .map(|(_, v)| Ok(cosine_sim(h, v)? / self.tau))
            .collect::<Result<_>>()?;
        let (loss, d_positive, d_negatives) = match self.denominator {
            Denominator::WithPositive => {
                let mut all = Vec::with_capacity(scores.len() + 1);
                all.push(positive);
                all.extend_from_slice(&scores);
                let lse = logsumexp(&all)?;
                let d_neg = scores.iter().map(|s| (s - lse).exp()).collect();
                (lse - positive, (positive - lse).exp() - 1.0, d_neg)
            }
            Denominator::Literal if scores.is_empty() => {
                (LITERAL_GUARD.ln() - positive, -1.0, Vec::new())
            }
            Denominator::Literal => {
                let lse = logsumexp(&scores)?;
                let guard = LITERAL_GUARD * (-lse).exp();
                let d_neg = scores
                    .iter()
                    .map(|s| (s - lse).exp() / (1.0 + guard))
                    .collect();
                (lse + guard.ln_1p() - positive, -1.0, d_neg)
            }
        };
        Ok(AnchorTerm {
            loss,
            d_positive,
            negatives,
            d_negatives,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Negative {
    InBatch(ViewRef),
    Noise,
}

struct AnchorTerm<'a> {
    loss: f64,
    d_positive: f64,
    negatives: Vec<(Negative, &'a [f64])>,
    d_negatives: Vec<f64>,
}

/// Per-anchor loss terms L_i (not averaged).
pub fn loss_terms(batch: &LossBatch<'_>) -> Result<Vec<f64>> {
    batch.validate()?;
    (0..batch.anchors.rows())
        .map(|i| Ok(batch.anchor_term(i)?.loss))
        .collect()
}

pub fn loss_forward(batch: &LossBatch<'_>) -> Result<f64> {
    let terms = loss_terms(batch)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Exact gradient of [`loss_forward`] with respect to the anchor and
/// positive matrices. In-batch negatives are rows of those matrices, so
/// their contributions land in the same gradients; the bank gets none.
pub fn loss_backward(batch: &LossBatch<'_>) -> Result<LossGrads> {
    Ok(loss_and_grads(batch)?.1)
}

pub fn loss_and_grads(batch: &LossBatch<'_>) -> Result<(f64, LossGrads)> {
    batch.validate()?;
    let (b, d) = (batch.anchors.rows(), batch.anchors.cols());
    let mut grads = LossGrads {
        anchors: Matrix::zeros(b, d),
        positives: Matrix::zeros(b, d),
    };
    let scale = 1.0 / (b as f64 * batch.tau);
    let mut total = 0.0;
    for i in 0..b {
        let h = batch.anchors.row(i);
        let term = batch.anchor_term(i)?;
        total += term.loss;

        let hp = batch.positives.row(i);
        let coeff = term.d_positive * scale;
        add_cosine_grad_b(hp, h, coeff, grads.anchors.row_mut(i))?;
        add_cosine_grad_b(h, hp, coeff, grads.positives.row_mut(i))?;

        for ((kind, v), &dn) in term.negatives.iter().zip(&term.d_negatives) {
            let coeff = dn * scale;
            add_cosine_grad_b(v, h, coeff, grads.anchors.row_mut(i))?;
            if let Negative::InBatch(r) = kind {
                let target = match r.view {
                    View::Anchor => grads.anchors.row_mut(r.sentence),
                    View::Positive => grads.positives.row_mut(r.sentence),
                };
                add_cosine_grad_b(h, v, coeff, target)?;
            }
        }
    }
    Ok((total / b as f64, grads))
}
