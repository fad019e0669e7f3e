//! Two-layer projection head `y = dropout(act(x·W1 + b1))·W2 + b2`.
//!
//! Inverted dropout sits on the hidden activations only; the second layer
//! is linear, so the dropped output is an unbiased estimate of the
//! undropped one. Two independent masks over the same input give the
//! positive pair.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub activation: Activation,
    pub dropout: f64,
    /// Incremented on every optimizer update; forward caches record it.
    pub revision: u64,
}

/// Gradients shaped like [`HeadParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl HeadGrads {
    pub fn slices(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

impl HeadParams {
    /// Identity-initialized head (rectangular blocks padded with zeros) plus
    /// N(0, init_std²) perturbation; starts close to the input embeddings.
    pub fn near_identity(
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        activation: Activation,
        dropout: f64,
        init_std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let normal = Normal::new(0.0, init_std)
            .map_err(|e| Error::Config(format!("init_std {init_std}: {e}")))?;
        let mut w1 = Matrix::zeros(d_in, d_hidden);
        let mut w2 = Matrix::zeros(d_hidden, d_out);
        for w in [&mut w1, &mut w2] {
            for i in 0..w.rows().min(w.cols()) {
                w[(i, i)] = 1.0;
            }
            w.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v += normal.sample(rng));
        }
        let params = Self {
            w1,
            b1: vec![0.0; d_hidden],
            w2,
            b2: vec![0.0; d_out],
            activation,
            dropout,
            revision: 0,
        };
        params.validate()?;
        Ok(params)
    }

    /// Exact identity map: identity activation, unit weights, zero bias.
    pub fn identity(d: usize) -> Self {
        Self {
            w1: Matrix::identity(d),
            b1: vec![0.0; d],
            w2: Matrix::identity(d),
            b2: vec![0.0; d],
            activation: Activation::Identity,
            dropout: 0.0,
            revision: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1.cols() != self.b1.len()
            || self.w2.rows() != self.b1.len()
            || self.w2.cols() != self.b2.len()
        {
            return Err(Error::Shape(format!(
                "inconsistent head shapes: W1 {}x{}, b1 {}, W2 {}x{}, b2 {}",
                self.w1.rows(),
                self.w1.cols(),
                self.b1.len(),
                self.w2.rows(),
                self.w2.cols(),
                self.b2.len()
            )));
        }
        if self.d_out() < 2 {
            return Err(Error::Config(format!(
                "output dimension must be >= 2, got {}",
                self.d_out()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if !self
            .slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
        {
            return Err(Error::Domain("non-finite head parameter".into()));
        }
        Ok(())
    }

    pub fn d_in(&self) -> usize {
        self.w1.rows()
    }

    pub fn d_hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w2.cols()
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn zero_grads(&self) -> HeadGrads {
        HeadGrads {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.d_in() {
            return Err(Error::Shape(format!(
                "input dimension {} != head input dimension {}",
                x.cols(),
                self.d_in()
            )));
        }
        Ok(())
    }

    fn hidden(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.matmul(&self.w1)?;
        for r in 0..h.rows() {
            for (v, b) in h.row_mut(r).iter_mut().zip(&self.b1) {
                *v = self.activation.apply(*v + b);
            }
        }
        Ok(h)
    }

    fn output(&self, hidden: &Matrix) -> Result<Matrix> {
        let mut y = hidden.matmul(&self.w2)?;
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.b2) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// Deterministic encoding with dropout disabled.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.output(&self.hidden(x)?)
    }

    /// Inverted-dropout mask for a `rows`×d_hidden activation: entries are
    /// 0 or 1/(1−p). All ones when p = 0, without consuming randomness.
    pub fn dropout_mask(&self, rows: usize, rng: &mut impl Rng) -> Matrix {
        let mut mask = Matrix::zeros(rows, self.d_hidden());
        let p = self.dropout;
        if p == 0.0 {
            mask.as_mut_slice().iter_mut().for_each(|v| *v = 1.0);
            return mask;
        }
        let keep = 1.0 / (1.0 - p);
        for v in mask.as_mut_slice() {
            *v = if rng.random::<f64>() < p { 0.0 } else { keep };
        }
        mask
    }

    /// Two dropout views of every row of `x`.
    pub fn forward_views(&self, x: &Matrix, rng: &mut impl Rng) -> Result<ForwardCache> {
        self.check_input(x)?;
        let first = self.dropout_mask(x.rows(), rng);
        let second = self.dropout_mask(x.rows(), rng);
        self.forward_with_masks(x, [first, second])
    }

    pub fn forward_with_masks(&self, x: &Matrix, masks: [Matrix; 2]) -> Result<ForwardCache> {
        let hidden = self.hidden(x)?;
        for m in &masks {
            if m.rows() != hidden.rows() || m.cols() != hidden.cols() {
                return Err(Error::Shape(
                    "dropout mask does not match hidden activations".into(),
                ));
            }
        }
        let dropped: Vec<Matrix> = masks
            .iter()
            .map(|m| {
                let mut d = hidden.clone();
                d.as_mut_slice()
                    .iter_mut()
                    .zip(m.as_slice())
                    .for_each(|(v, k)| *v *= k);
                d
            })
            .collect();
        let outputs = [self.output(&dropped[0])?, self.output(&dropped[1])?];
        Ok(ForwardCache {
            revision: self.revision,
            input: x.clone(),
            hidden,
            masks,
            outputs,
        })
    }

    /// Gradients of a loss through both views, given ∂loss/∂h and ∂loss/∂h⁺.
    pub fn head_backward(
        &self,
        cache: &ForwardCache,
        grad_h: &Matrix,
        grad_h_plus: &Matrix,
    ) -> Result<HeadGrads> {
        if cache.revision != self.revision {
            return Err(Error::Contract(
                "forward cache is stale: parameters changed since the forward pass",
            ));
        }
        if cache.input.cols() != self.d_in() || cache.hidden.cols() != self.d_hidden() {
            return Err(Error::Contract(
                "forward cache was produced by a different head",
            ));
        }
        let mut grads = self.zero_grads();
        for (view, upstream) in [grad_h, grad_h_plus].into_iter().enumerate() {
            if upstream.rows() != cache.input.rows() || upstream.cols() != self.d_out() {
                return Err(Error::Shape(
                    "upstream gradient does not match head outputs".into(),
                ));
            }
            let mask = &cache.masks[view];
            let mut dropped = cache.hidden.clone();
            dropped
                .as_mut_slice()
                .iter_mut()
                .zip(mask.as_slice())
                .for_each(|(v, k)| *v *= k);

            let dw2 = dropped.t_matmul(upstream)?;
            add_into(grads.w2.as_mut_slice(), dw2.as_slice());
            for row in upstream.iter_rows() {
                add_into(&mut grads.b2, row);
            }

            // through W2, the mask, and the activation
            let mut d_pre = upstream.matmul_t(&self.w2)?;
            for ((g, k), out) in d_pre
                .as_mut_slice()
                .iter_mut()
                .zip(mask.as_slice())
                .zip(cache.hidden.as_slice())
            {
                *g *= k * self.activation.derivative_from_output(*out);
            }
            let dw1 = cache.input.t_matmul(&d_pre)?;
            add_into(grads.w1.as_mut_slice(), dw1.as_slice());
            for row in d_pre.iter_rows() {
                add_into(&mut grads.b1, row);
            }
        }
        Ok(grads)
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

/// Forward state needed by [`HeadParams::head_backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    revision: u64,
    input: Matrix,
    hidden: Matrix,
    masks: [Matrix; 2],
    outputs: [Matrix; 2],
}

impl ForwardCache {
    /// First view (anchors).
    pub fn anchors(&self) -> &Matrix {
        &self.outputs[0]
    }

    /// Second view (positives).
    pub fn positives(&self) -> &Matrix {
        &self.outputs[1]
    }

    pub fn masks(&self) -> &[Matrix; 2] {
        &self.masks
    }
}
