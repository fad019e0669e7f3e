use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{HeadGrads, HeadParams};

/// Adam moments over the flattened head parameters (W1, b1, W2, b2 order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn for_head(params: &HeadParams) -> Self {
        Self::new(params.num_params())
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut HeadParams,
    grads: &HeadGrads,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let n = params.num_params();
    let grad_len: usize = grads.slices().iter().map(|s| s.len()).sum();
    if grad_len != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape(format!(
            "adam: {n} parameters, {grad_len} gradients, {} / {} moments",
            state.m.len(),
            state.v.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let mut k = 0;
    for (theta, g) in params.slices_mut().into_iter().zip(grads.slices()) {
        for (p, &gi) in theta.iter_mut().zip(g) {
            let m = &mut state.m[k];
            let v = &mut state.v[k];
            *m = b1 * *m + (1.0 - b1) * gi;
            *v = b2 * *v + (1.0 - b2) * gi * gi;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
            k += 1;
        }
    }
    params.revision += 1;
    Ok(())
}
