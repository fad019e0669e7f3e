//! Anisotropic clustered embeddings with a clean latent reference and
//! scored pairs, for desk-scale experiments.
//!
//! Latent points z sit in `clusters` tight groups on the unit sphere. Each is
//! squeezed into a cone around a fixed axis μ: with ψ = ∠(z, μ) and u the
//! unit component of z orthogonal to μ, the observed vector is
//! `cos θ·μ + sin θ·u + noise` where θ = ψ·half_angle/90°. A half-angle of
//! 90° leaves the directions unchanged. The latent z doubles as the
//! reference embedding; gold scores combine cluster co-membership with
//! latent cosine.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{Pair, PairDataset};
use crate::matrix::{dot, norm, Matrix};
use crate::rng::{stream_rng, Stream};
use crate::similarity::cosine_sim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    /// Typical angle between an observed vector and the cone axis, degrees.
    pub half_angle_deg: f64,
    pub clusters: usize,
    /// Within-cluster spread of the latent points before normalization.
    pub spread: f64,
    /// Standard deviation of the isotropic observation noise (total norm).
    pub noise: f64,
    pub pairs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            d: 64,
            half_angle_deg: 20.0,
            clusters: 16,
            spread: 0.3,
            noise: 0.05,
            pairs: 500,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if self.d < 2 {
            return bad(format!("d must be >= 2, got {}", self.d));
        }
        if !(self.half_angle_deg > 0.0 && self.half_angle_deg <= 90.0) {
            return bad(format!(
                "cone half-angle must be in (0, 90] degrees, got {}",
                self.half_angle_deg
            ));
        }
        if self.clusters == 0 || self.clusters > self.n {
            return bad(format!("clusters must be in [1, n], got {}", self.clusters));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return bad(format!("spread must be >= 0, got {}", self.spread));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    /// Observed, anisotropic embeddings.
    pub corpus: Matrix,
    /// Unit latent vectors.
    pub reference: Matrix,
    pub cluster_of: Vec<usize>,
    pub axis: Vec<f64>,
    pub pairs: PairDataset,
}

fn gaussian(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Maps a unit vector into the cone of `half_angle` radians around the unit
/// `axis`. `fallback` supplies the orthogonal direction when z is parallel
/// to the axis.
pub fn cone_map(z: &[f64], axis: &[f64], half_angle: f64, fallback: &[f64]) -> Vec<f64> {
    let c = dot(z, axis).clamp(-1.0, 1.0);
    let psi = c.acos();
    let theta = psi * half_angle / std::f64::consts::FRAC_PI_2;
    let mut u: Vec<f64> = z.iter().zip(axis).map(|(zi, ai)| zi - c * ai).collect();
    if norm(&u) < 1e-9 {
        let f = dot(fallback, axis);
        u = fallback
            .iter()
            .zip(axis)
            .map(|(fi, ai)| fi - f * ai)
            .collect();
    }
    let u = unit(u);
    axis.iter()
        .zip(&u)
        .map(|(a, ui)| theta.cos() * a + theta.sin() * ui)
        .collect()
}

/// Gold score in [0, 5]: half cluster co-membership, half latent cosine.
pub fn gold_score(same_cluster: bool, latent_cos: f64) -> f64 {
    5.0 * (0.5 * f64::from(u8::from(same_cluster))
        + 0.5 * (latent_cos.clamp(-1.0, 1.0) + 1.0) / 2.0)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let (n, d) = (cfg.n, cfg.d);
    let mut rng = stream_rng(cfg.seed, Stream::Synth, 0);
    let axis = unit(gaussian(&mut rng, d));
    let centers: Vec<Vec<f64>> = (0..cfg.clusters)
        .map(|_| unit(gaussian(&mut rng, d)))
        .collect();
    let half_angle = cfg.half_angle_deg.to_radians();
    let scale = 1.0 / (d as f64).sqrt();

    let mut cluster_of = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n * d);
    let mut observed = Vec::with_capacity(n * d);
    for i in 0..n {
        let k = if i < cfg.clusters {
            i
        } else {
            rng.random_range(0..cfg.clusters)
        };
        let g = gaussian(&mut rng, d);
        let z = unit(
            centers[k]
                .iter()
                .zip(&g)
                .map(|(c, gi)| c + cfg.spread * scale * gi)
                .collect(),
        );
        let fallback = gaussian(&mut rng, d);
        let x = cone_map(&z, &axis, half_angle, &fallback);
        let eps = gaussian(&mut rng, d);
        observed.extend(x.iter().zip(&eps).map(|(xi, e)| xi + cfg.noise * scale * e));
        latent.extend(z);
        cluster_of.push(k);
    }
    let corpus = Matrix::from_vec(n, d, observed)?;
    let reference = Matrix::from_vec(n, d, latent)?;

    let mut members = vec![Vec::new(); cfg.clusters];
    for (i, &k) in cluster_of.iter().enumerate() {
        members[k].push(i);
    }
    let mut pairs = Vec::with_capacity(cfg.pairs);
    for _ in 0..cfg.pairs {
        let a = rng.random_range(0..n);
        let group = &members[cluster_of[a]];
        let b = if rng.random_bool(0.5) && group.len() > 1 {
            loop {
                let b = group[rng.random_range(0..group.len())];
                if b != a {
                    break b;
                }
            }
        } else {
            (a + rng.random_range(1..n)) % n
        };
        let cos = cosine_sim(reference.row(a), reference.row(b))?;
        pairs.push(Pair {
            a,
            b,
            gold: gold_score(cluster_of[a] == cluster_of[b], cos),
        });
    }
    Ok(SynthData {
        corpus,
        reference,
        cluster_of,
        axis,
        pairs: PairDataset::new(pairs)?,
    })
}

/// n points drawn uniformly from the unit sphere in d dimensions.
pub fn isotropic(n: usize, d: usize, seed: u64) -> Result<Matrix> {
    let mut rng = stream_rng(seed, Stream::Synth, 1);
    let data = (0..n).flat_map(|_| unit(gaussian(&mut rng, d))).collect();
    Matrix::from_vec(n, d, data)
}

/// Description of the generating recipe, for a metadata sidecar.
pub fn recipe(cfg: &SynthConfig) -> serde_json::Value {
    serde_json::json!({
        "generator": "clustered-cone",
        "params": cfg,
        "latent": "z = normalize(center[c] + spread * g / sqrt(d)), center ~ uniform on the sphere, g ~ N(0, I)",
        "observed": "x = cos(theta) * axis + sin(theta) * u + noise * e / sqrt(d), theta = angle(z, axis) * half_angle / 90deg, u = unit(z - (z.axis) axis), e ~ N(0, I)",
        "reference": "z",
        "gold": "5 * (0.5 * [same cluster] + 0.5 * (cos(z_a, z_b) + 1) / 2)",
        "pairs": "anchor uniform; partner from the same cluster with probability 1/2, otherwise uniform",
    })
}
