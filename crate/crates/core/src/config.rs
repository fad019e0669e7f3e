use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::Activation;
use crate::loss::{Denominator, NegativeViews};
use crate::noise::NoiseConfig;
use crate::weighting::WeightingMode;

/// Every scalar and switch of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Temperature of the contrastive loss.
    pub tau: f64,
    /// Temperature of the non-uniformity loss used for noise ascent.
    pub tau_u: f64,
    pub sigma: f64,
    pub beta: f64,
    pub t_steps: usize,
    /// Noise bank size as a multiple of the batch size.
    pub k: f64,
    pub phi: f64,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_every: u64,
    pub seed: u64,
    pub data_fraction: f64,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
    pub no_noise: bool,
    pub no_noise_update: bool,
    pub weighting: WeightingMode,
    pub denominator: Denominator,
    pub negative_views: NegativeViews,
    /// Defaults to the input dimension.
    pub hidden_dim: Option<usize>,
    /// Defaults to the input dimension.
    pub out_dim: Option<usize>,
    pub activation: Activation,
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            tau_u: 0.05,
            sigma: 1.0,
            beta: 1e-3,
            t_steps: 4,
            k: 1.0,
            phi: 0.9,
            dropout: 0.1,
            lr: 1e-3,
            batch_size: 16,
            epochs: 3,
            eval_every: 150,
            seed: 42,
            data_fraction: 1.0,
            max_steps: None,
            no_noise: false,
            no_noise_update: false,
            weighting: WeightingMode::Reference,
            denominator: Denominator::WithPositive,
            negative_views: NegativeViews::Both,
            hidden_dim: None,
            out_dim: None,
            activation: Activation::Tanh,
            init_std: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig {
            k: self.k,
            sigma: self.sigma,
            beta: self.beta,
            t_steps: self.t_steps,
            tau_u: self.tau_u,
        }
    }

    /// Noise negatives are generated at all.
    pub fn uses_noise(&self) -> bool {
        !self.no_noise && self.k > 0.0
    }

    /// Every invalid field, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.tau.is_finite() && self.tau > 0.0) {
            out.push(format!("tau must be > 0, got {}", self.tau));
        }
        out.extend(self.noise().problems());
        if !self.phi.is_finite() {
            out.push(format!("phi must be finite, got {}", self.phi));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            out.push(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            out.push(format!("learning rate must be > 0, got {}", self.lr));
        }
        if self.batch_size < 2 {
            out.push(format!("batch size must be >= 2, got {}", self.batch_size));
        }
        if self.epochs == 0 {
            out.push("epochs must be >= 1".into());
        }
        if self.eval_every == 0 {
            out.push("eval cadence must be >= 1".into());
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            out.push(format!(
                "data fraction must be in (0, 1], got {}",
                self.data_fraction
            ));
        }
        if self.max_steps == Some(0) {
            out.push("max steps must be >= 1".into());
        }
        if self.out_dim.is_some_and(|d| d < 2) {
            out.push("output dimension must be >= 2".into());
        }
        if self.hidden_dim == Some(0) {
            out.push("hidden dimension must be >= 1".into());
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            out.push(format!("init std must be >= 0, got {}", self.init_std));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().as_slice() {
            [] => Ok(()),
            problems => Err(Error::Config(problems.join("; "))),
        }
    }
}
