//! Noise-based negatives: Gaussian initialization and normalized gradient
//! ascent on the non-uniformity loss.
//!
//! One bank is shared by every instance of a batch, so the per-instance
//! non-uniformity loss is summed over the batch before differentiation.
//! Anchors and positives are constants here; only the bank moves.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};
use crate::similarity::{add_cosine_grad_b, cosine_sim, logsumexp, softmax};

/// Gradients with a smaller L2 norm leave their vector untouched.
pub const MIN_GRAD_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Bank size as a multiple of the batch size.
    pub k: f64,
    pub sigma: f64,
    pub beta: f64,
    pub t_steps: usize,
    pub tau_u: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            k: 1.0,
            sigma: 1.0,
            beta: 1e-3,
            t_steps: 4,
            tau_u: 0.05,
        }
    }
}

impl NoiseConfig {
    /// Every invalid field, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.k.is_finite() && self.k >= 0.0) {
            out.push(format!("k must be >= 0, got {}", self.k));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            out.push(format!("sigma must be > 0, got {}", self.sigma));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            out.push(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.tau_u.is_finite() && self.tau_u > 0.0) {
            out.push(format!("tau_u must be > 0, got {}", self.tau_u));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().as_slice() {
            [] => Ok(()),
            problems => Err(Error::Config(problems.join("; "))),
        }
    }

    /// `round(k · batch_size)`.
    pub fn bank_size(&self, batch_size: usize) -> usize {
        (self.k * batch_size as f64).round() as usize
    }
}

/// m×d matrix of noise negatives shared by one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank {
    vectors: Matrix,
}

impl NoiseBank {
    pub fn from_matrix(vectors: Matrix) -> Result<Self> {
        if vectors.rows() == 0 {
            return Err(Error::Domain(
                "noise bank must hold at least one vector".into(),
            ));
        }
        if !vectors.is_finite() {
            return Err(Error::Domain("noise bank holds non-finite values".into()));
        }
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn into_matrix(self) -> Matrix {
        self.vectors
    }
}

/// Draws m i.i.d. N(0, σ²) vectors of dimension d.
pub fn init_noise(rng: &mut impl Rng, m: usize, d: usize, sigma: f64) -> Result<NoiseBank> {
    if m == 0 {
        return Err(Error::Domain(
            "noise bank size is 0; disable noise with k = 0 instead".into(),
        ));
    }
    if d < 2 {
        return Err(Error::Domain(format!(
            "noise dimension must be >= 2, got {d}"
        )));
    }
    let normal =
        Normal::new(0.0, sigma).map_err(|e| Error::Domain(format!("sigma {sigma}: {e}")))?;
    let data = (0..m * d).map(|_| normal.sample(rng)).collect();
    NoiseBank::from_matrix(Matrix::from_vec(m, d, data)?)
}

fn check_batch(anchors: &Matrix, positives: &Matrix, bank: &NoiseBank) -> Result<()> {
    if anchors.rows() != positives.rows() || anchors.cols() != positives.cols() {
        return Err(Error::Shape(format!(
            "anchors {}x{} and positives {}x{} are not row-aligned",
            anchors.rows(),
            anchors.cols(),
            positives.rows(),
            positives.cols()
        )));
    }
    if bank.dim() != anchors.cols() {
        return Err(Error::Shape(format!(
            "noise dimension {} != representation dimension {}",
            bank.dim(),
            anchors.cols()
        )));
    }
    Ok(())
}

/// Scaled similarities `sim(h_i, ĥ_j)/τ_u` for one anchor.
fn noise_scores(anchor: &[f64], bank: &NoiseBank, tau_u: f64) -> Result<Vec<f64>> {
    bank.vectors
        .iter_rows()
        .map(|h| Ok(cosine_sim(anchor, h)? / tau_u))
        .collect()
}

/// Σ_i [ −sim(h_i, h_i⁺)/τ_u + log Σ_j e^{sim(h_i, ĥ_j)/τ_u} ].
pub fn nonuniformity_loss(
    anchors: &Matrix,
    positives: &Matrix,
    bank: &NoiseBank,
    tau_u: f64,
) -> Result<f64> {
    check_batch(anchors, positives, bank)?;
    let mut total = 0.0;
    for (h, h_plus) in anchors.iter_rows().zip(positives.iter_rows()) {
        let positive = cosine_sim(h, h_plus)? / tau_u;
        total += logsumexp(&noise_scores(h, bank, tau_u)?)? - positive;
    }
    Ok(total)
}

/// Gradient of [`nonuniformity_loss`] with respect to every bank vector.
pub fn noise_gradient(
    anchors: &Matrix,
    positives: &Matrix,
    bank: &NoiseBank,
    tau_u: f64,
) -> Result<Matrix> {
    check_batch(anchors, positives, bank)?;
    let mut grad = Matrix::zeros(bank.len(), bank.dim());
    for h in anchors.iter_rows() {
        let probs = softmax(&noise_scores(h, bank, tau_u)?)?;
        for (j, p) in probs.into_iter().enumerate() {
            add_cosine_grad_b(h, bank.vectors.row(j), p / tau_u, grad.row_mut(j))?;
        }
    }
    Ok(grad)
}

/// One update ĥ_j ← ĥ_j + β·g_j/‖g_j‖₂ applied to every vector.
pub fn ascent_step(
    bank: &NoiseBank,
    anchors: &Matrix,
    positives: &Matrix,
    beta: f64,
    tau_u: f64,
) -> Result<NoiseBank> {
    let grad = noise_gradient(anchors, positives, bank, tau_u)?;
    let mut next = bank.vectors.clone();
    for j in 0..next.rows() {
        let g = grad.row(j);
        let gn = norm(g);
        if gn < MIN_GRAD_NORM {
            continue;
        }
        for (v, gi) in next.row_mut(j).iter_mut().zip(g) {
            *v += beta * gi / gn;
        }
    }
    NoiseBank::from_matrix(next)
}

/// `t_steps` normalized ascent steps on the batch-summed non-uniformity loss.
pub fn optimize_noise(
    bank: &NoiseBank,
    anchors: &Matrix,
    positives: &Matrix,
    cfg: &NoiseConfig,
) -> Result<NoiseBank> {
    cfg.validate()?;
    let mut current = bank.clone();
    if cfg.beta == 0.0 {
        return Ok(current);
    }
    for _ in 0..cfg.t_steps {
        current = ascent_step(&current, anchors, positives, cfg.beta, cfg.tau_u)?;
    }
    Ok(current)
}
