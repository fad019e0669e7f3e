//! Finite-difference checks of the analytic gradients, run on seeded
//! random problems. Backs the CLI's `--self-check`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::head::{Activation, HeadParams};
use crate::loss::{loss_and_grads, loss_forward, Denominator, LossBatch, NegativeViews};
use crate::matrix::Matrix;
use crate::noise::{init_noise, noise_gradient, nonuniformity_loss, NoiseBank};
use crate::rng::{stream_rng, Stream};
use crate::weighting::WeightMask;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| StandardNormal.sample(rng))
            .collect(),
    )
    .expect("shape is consistent")
}

/// `max|a − n| / max(max|n|, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = numeric
        .iter()
        .map(|n| n.abs())
        .fold(0.0, f64::max)
        .max(1e-8);
    diff / scale
}

fn central_difference(values: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let orig = values[i];
            values[i] = orig + FD_STEP;
            let up = f(values);
            values[i] = orig - FD_STEP;
            let down = f(values);
            values[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Noise-bank gradient of the summed non-uniformity loss.
pub fn noise_gradient_error(seed: u64, d: usize, m: usize, b: usize, tau_u: f64) -> Result<f64> {
    let mut rng = stream_rng(seed, Stream::Eval, 101);
    let anchors = gaussian_matrix(&mut rng, b, d);
    let positives = gaussian_matrix(&mut rng, b, d);
    let bank = init_noise(&mut rng, m, d, 1.0)?;
    let analytic = noise_gradient(&anchors, &positives, &bank, tau_u)?;
    let mut flat = bank.into_matrix().into_vec();
    let numeric = central_difference(&mut flat, |v| {
        let bank = NoiseBank::from_matrix(Matrix::from_vec(m, d, v.to_vec()).unwrap()).unwrap();
        nonuniformity_loss(&anchors, &positives, &bank, tau_u).unwrap()
    });
    Ok(relative_error(analytic.as_slice(), &numeric))
}

/// Random keep pattern with roughly a quarter of the negatives masked.
fn random_mask(rng: &mut impl Rng, b: usize, in_batch: usize, m: usize) -> WeightMask {
    let mut mask = WeightMask::all_kept(b, in_batch, m);
    for i in 0..b {
        for c in 0..in_batch + m {
            mask.set(i, c, rng.random_bool(0.75));
        }
    }
    mask
}

/// Errors of the loss gradient w.r.t. the representations and of the full
/// chain through the head parameters, as `(loss, head)`.
pub fn loss_gradient_errors(
    seed: u64,
    d: usize,
    d_hidden: usize,
    b: usize,
    m: usize,
    denominator: Denominator,
) -> Result<(f64, f64)> {
    let mut rng = stream_rng(seed, Stream::Eval, 102);
    let params = HeadParams::near_identity(d, d_hidden, d, Activation::Tanh, 0.2, 0.3, &mut rng)?;
    let x = gaussian_matrix(&mut rng, b, d);
    let bank = gaussian_matrix(&mut rng, m, d);
    let mask = random_mask(&mut rng, b, 2 * (b - 1), m);
    let cache = params.forward_views(&x, &mut rng)?;
    let masks = cache.masks().clone();
    fn batch<'a>(
        a: &'a Matrix,
        p: &'a Matrix,
        bank: &'a Matrix,
        mask: &'a WeightMask,
        den: Denominator,
    ) -> LossBatch<'a> {
        LossBatch {
            anchors: a,
            positives: p,
            bank: Some(bank),
            mask,
            tau: 0.5,
            views: NegativeViews::Both,
            denominator: den,
        }
    }

    let (_, grads) = loss_and_grads(&batch(
        cache.anchors(),
        cache.positives(),
        &bank,
        &mask,
        denominator,
    ))?;
    let mut reps: Vec<f64> = cache
        .anchors()
        .as_slice()
        .iter()
        .chain(cache.positives().as_slice())
        .copied()
        .collect();
    let half = b * d;
    let numeric = central_difference(&mut reps, |v| {
        let a = Matrix::from_vec(b, d, v[..half].to_vec()).unwrap();
        let p = Matrix::from_vec(b, d, v[half..].to_vec()).unwrap();
        loss_forward(&batch(&a, &p, &bank, &mask, denominator)).unwrap()
    });
    let analytic: Vec<f64> = grads
        .anchors
        .as_slice()
        .iter()
        .chain(grads.positives.as_slice())
        .copied()
        .collect();
    let loss_err = relative_error(&analytic, &numeric);

    let head_grads = params.head_backward(&cache, &grads.anchors, &grads.positives)?;
    let mut probe = params.clone();
    let mut flat: Vec<f64> = params.slices().concat();
    let numeric = central_difference(&mut flat, |v| {
        let mut offset = 0;
        for block in probe.slices_mut() {
            let len = block.len();
            block.copy_from_slice(&v[offset..offset + len]);
            offset += len;
        }
        let c = probe.forward_with_masks(&x, masks.clone()).unwrap();
        loss_forward(&batch(
            c.anchors(),
            c.positives(),
            &bank,
            &mask,
            denominator,
        ))
        .unwrap()
    });
    Ok((loss_err, relative_error(&head_grads.flatten(), &numeric)))
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheckReport {
    pub cases: usize,
    pub noise_max_error: f64,
    pub loss_max_error: f64,
    pub head_max_error: f64,
}

impl SelfCheckReport {
    pub const NOISE_TOLERANCE: f64 = 1e-4;
    pub const LOSS_TOLERANCE: f64 = 1e-3;

    pub fn passed(&self) -> bool {
        self.noise_max_error < Self::NOISE_TOLERANCE
            && self.loss_max_error < Self::LOSS_TOLERANCE
            && self.head_max_error < Self::LOSS_TOLERANCE
    }
}

/// Runs `cases` seeded problems of each kind.
pub fn self_check(seed: u64, cases: usize) -> Result<SelfCheckReport> {
    let mut report = SelfCheckReport {
        cases,
        noise_max_error: 0.0,
        loss_max_error: 0.0,
        head_max_error: 0.0,
    };
    for c in 0..cases as u64 {
        let s = seed.wrapping_add(c);
        report.noise_max_error = report
            .noise_max_error
            .max(noise_gradient_error(s, 16, 8, 4, 0.05)?);
        let denominator = if c % 2 == 0 {
            Denominator::WithPositive
        } else {
            Denominator::Literal
        };
        let (loss, head) = loss_gradient_errors(s, 8, 8, 4, 4, denominator)?;
        report.loss_max_error = report.loss_max_error.max(loss);
        report.head_max_error = report.head_max_error.max(head);
    }
    Ok(report)
}
