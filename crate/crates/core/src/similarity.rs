//! Cosine similarity, its gradients, and stable log-sum-exp.
//!
//! Inputs may come from 32-bit storage but everything here accumulates in
//! `f64`. Zero-norm vectors are reported as errors rather than patched with
//! an epsilon, so gradient checks never see a silently altered function.

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

fn checked_norm(v: &[f64], context: &'static str) -> Result<f64> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm(context));
    }
    Ok(n)
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "vector dimensions {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `aᵀb / (‖a‖‖b‖)`.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let na = checked_norm(a, "cosine_sim")?;
    let nb = checked_norm(b, "cosine_sim")?;
    Ok(dot(a, b) / (na * nb))
}

/// ∂cos(a,b)/∂b = (a/‖a‖ − cos(a,b)·b/‖b‖) / ‖b‖.
pub fn cosine_sim_grad_b(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; b.len()];
    add_cosine_grad_b(a, b, 1.0, &mut out)?;
    Ok(out)
}

/// ∂cos(a,b)/∂a, by symmetry of the cosine.
pub fn cosine_sim_grad_a(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    cosine_sim_grad_b(b, a)
}

/// Accumulates `scale · ∂cos(a,b)/∂b` into `out`. Returns the cosine.
pub fn add_cosine_grad_b(a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) -> Result<f64> {
    check_dims(a, b)?;
    let na = checked_norm(a, "cosine_sim_grad")?;
    let nb = checked_norm(b, "cosine_sim_grad")?;
    let cos = dot(a, b) / (na * nb);
    let ca = scale / (na * nb);
    let cb = scale * cos / (nb * nb);
    for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
        *o += ca * ai - cb * bi;
    }
    Ok(cos)
}

pub fn logsumexp(scores: &[f64]) -> Result<f64> {
    let max = scores
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or_else(|| Error::Domain("logsumexp of an empty list".into()))?;
    if !max.is_finite() {
        return Err(Error::Domain("logsumexp of non-finite scores".into()));
    }
    let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Softmax over `scores`, shifted by the maximum.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    let lse = logsumexp(scores)?;
    Ok(scores.iter().map(|s| (s - lse).exp()).collect())
}

/// Row-normalized copy of `m`.
pub fn normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let n = checked_norm(row, "normalize_rows")?;
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

/// Entry (i, j) is `cosine_sim(A_i, B_j)`.
pub fn pairwise_cosine(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "pairwise_cosine: dimensions {} and {} differ",
            a.cols(),
            b.cols()
        )));
    }
    let na: Vec<f64> = a
        .iter_rows()
        .map(|r| checked_norm(r, "pairwise_cosine"))
        .collect::<Result<_>>()?;
    let nb: Vec<f64> = b
        .iter_rows()
        .map(|r| checked_norm(r, "pairwise_cosine"))
        .collect::<Result<_>>()?;
    let mut out = a.matmul_t(b)?;
    for i in 0..a.rows() {
        for (j, &nbj) in nb.iter().enumerate() {
            out[(i, j)] /= na[i] * nbj;
        }
    }
    Ok(out)
}
