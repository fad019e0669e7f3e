//! Representation diagnostics and the Spearman evaluation harness.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::HeadParams;
use crate::io::PairDataset;
use crate::matrix::Matrix;
use crate::similarity::{cosine_sim, normalize_rows};

/// Largest point count for which uniformity is computed over all pairs.
pub const EXACT_UNIFORMITY_LIMIT: usize = 2000;
pub const DEFAULT_UNIFORMITY_SAMPLES: usize = 100_000;
/// Similarity above which an in-batch negative counts as "high".
pub const HIGH_SIMILARITY: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSampling {
    /// Exact up to [`EXACT_UNIFORMITY_LIMIT`] points, sampled beyond.
    Auto {
        samples: usize,
    },
    Exact,
    Sampled {
        samples: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformityOptions {
    pub sampling: PairSampling,
    /// L2-normalize rows before measuring distances.
    pub normalize: bool,
}

impl Default for UniformityOptions {
    fn default() -> Self {
        Self {
            sampling: PairSampling::Auto {
                samples: DEFAULT_UNIFORMITY_SAMPLES,
            },
            normalize: true,
        }
    }
}

/// Running log-sum-exp.
#[derive(Debug, Clone, Copy)]
struct OnlineLse {
    max: f64,
    sum: f64,
}

impl OnlineLse {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// log E_{i≠j} e^{−2‖f_i − f_j‖²}.
pub fn uniformity_loss(reps: &Matrix, opts: &UniformityOptions, rng: &mut impl Rng) -> Result<f64> {
    let n = reps.rows();
    if n < 2 {
        return Err(Error::Domain(format!(
            "uniformity needs at least 2 points, got {n}"
        )));
    }
    let owned;
    let x = if opts.normalize {
        owned = normalize_rows(reps)?;
        &owned
    } else {
        reps
    };
    let exact = match opts.sampling {
        PairSampling::Exact => None,
        PairSampling::Auto { .. } if n <= EXACT_UNIFORMITY_LIMIT => None,
        PairSampling::Auto { samples } | PairSampling::Sampled { samples } => Some(samples),
    };
    let mut lse = OnlineLse::new();
    let count = match exact {
        None => {
            for i in 0..n {
                for j in i + 1..n {
                    lse.push(-2.0 * sq_dist(x.row(i), x.row(j)));
                }
            }
            n * (n - 1) / 2
        }
        Some(0) => {
            return Err(Error::Domain(
                "uniformity sampling needs at least one pair".into(),
            ))
        }
        Some(samples) => {
            for _ in 0..samples {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                lse.push(-2.0 * sq_dist(x.row(i), x.row(j)));
            }
            samples
        }
    };
    Ok(lse.value() - (count as f64).ln())
}

/// Mean ‖f(x) − f(x⁺)‖² over row-aligned pairs, on normalized rows.
pub fn alignment_loss(anchors: &Matrix, positives: &Matrix) -> Result<f64> {
    if anchors.rows() != positives.rows()
        || anchors.cols() != positives.cols()
        || anchors.rows() == 0
    {
        return Err(Error::Shape(
            "alignment needs equally shaped, non-empty batches".into(),
        ));
    }
    let a = normalize_rows(anchors)?;
    let p = normalize_rows(positives)?;
    let total: f64 = a
        .iter_rows()
        .zip(p.iter_rows())
        .map(|(x, y)| sq_dist(x, y))
        .sum();
    Ok(total / anchors.rows() as f64)
}

/// Cosine-similarity histogram over `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityHistogram {
    pub counts: Vec<u64>,
    pub high: u64,
}

impl SimilarityHistogram {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Domain(format!(
                "histogram needs at least 2 bins, got {bins}"
            )));
        }
        Ok(Self {
            counts: vec![0; bins],
            high: 0,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of recorded similarities at or above [`HIGH_SIMILARITY`].
    pub fn fraction_high(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.high as f64 / t as f64,
        }
    }

    pub fn bin_of(&self, sim: f64) -> usize {
        let bins = self.bins();
        let pos = ((sim.clamp(-1.0, 1.0) + 1.0) / 2.0 * bins as f64).floor() as usize;
        pos.min(bins - 1)
    }

    pub fn record(&mut self, sim: f64) {
        let b = self.bin_of(sim);
        self.counts[b] += 1;
        if sim >= HIGH_SIMILARITY {
            self.high += 1;
        }
    }

    pub fn merge(&mut self, other: &SimilarityHistogram) -> Result<()> {
        if other.bins() != self.bins() {
            return Err(Error::Shape("histograms with different bin counts".into()));
        }
        self.counts
            .iter_mut()
            .zip(&other.counts)
            .for_each(|(a, b)| *a += b);
        self.high += other.high;
        Ok(())
    }

    /// `bin_low  bin_high  count` rows.
    pub fn to_tsv(&self) -> String {
        let bins = self.bins() as f64;
        let mut out = String::from("bin_low\tbin_high\tcount\n");
        for (i, c) in self.counts.iter().enumerate() {
            let lo = -1.0 + 2.0 * i as f64 / bins;
            let hi = -1.0 + 2.0 * (i + 1) as f64 / bins;
            writeln!(out, "{lo}\t{hi}\t{c}").unwrap();
        }
        out
    }
}

pub fn negative_similarity_histogram(
    anchor: &[f64],
    negatives: &Matrix,
    bins: usize,
) -> Result<SimilarityHistogram> {
    if negatives.rows() == 0 {
        return Err(Error::Domain("no negatives to histogram".into()));
    }
    let mut hist = SimilarityHistogram::new(bins)?;
    for neg in negatives.iter_rows() {
        hist.record(cosine_sim(anchor, neg)?);
    }
    Ok(hist)
}

/// Pooled in-batch negative audit: rows are shuffled into batches of
/// `batch_size`, and each anchor (up to `max_anchors`) is compared with the
/// other members of its batch.
pub fn audit_negatives(
    reps: &Matrix,
    batch_size: usize,
    max_anchors: usize,
    bins: usize,
    rng: &mut impl Rng,
) -> Result<SimilarityHistogram> {
    let n = reps.rows();
    if n < 2 {
        return Err(Error::Domain(format!(
            "audit needs at least 2 embeddings, got {n}"
        )));
    }
    if batch_size < 2 {
        return Err(Error::Domain("audit batch size must be at least 2".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut hist = SimilarityHistogram::new(bins)?;
    let mut anchors = 0;
    'outer: for chunk in order.chunks(batch_size) {
        if chunk.len() < 2 {
            continue;
        }
        for &a in chunk {
            if anchors >= max_anchors {
                break 'outer;
            }
            for &b in chunk.iter().filter(|&&b| b != a) {
                hist.record(cosine_sim(reps.row(a), reps.row(b))?);
            }
            anchors += 1;
        }
    }
    Ok(hist)
}

/// Probability that a uniform direction on the unit sphere in R^d has
/// cosine ≥ t with a fixed axis, by Simpson quadrature of sin^{d−2}.
pub fn cap_fraction(d: usize, t: f64) -> f64 {
    assert!(d >= 2);
    let integrate = |hi: f64| {
        let steps = 20_000;
        let h = hi / steps as f64;
        let f = |x: f64| x.sin().powi(d as i32 - 2);
        let mut acc = f(0.0) + f(hi);
        for k in 1..steps {
            acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    integrate(t.clamp(-1.0, 1.0).acos()) / integrate(std::f64::consts::PI)
}

/// 1-based ranks with ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "correlation of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::UndefinedCorrelation("empty input"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!(
            "spearman of lengths {} and {}",
            pred.len(),
            gold.len()
        )));
    }
    if pred.iter().chain(gold).any(|v| !v.is_finite()) {
        return Err(Error::Domain("spearman of non-finite values".into()));
    }
    pearson(&average_ranks(pred), &average_ranks(gold))
}

/// Cosine prediction for every pair, encoding with dropout disabled.
pub fn predict_pairs(
    params: &HeadParams,
    corpus: &Matrix,
    pairs: &PairDataset,
) -> Result<Vec<f64>> {
    pairs.validate_against(corpus.rows())?;
    let rows = pairs.referenced_rows();
    let encoded = params.encode(&corpus.select_rows(&rows)?)?;
    let slot = |i: usize| rows.binary_search(&i).expect("row collected above");
    pairs
        .pairs()
        .iter()
        .map(|p| cosine_sim(encoded.row(slot(p.a)), encoded.row(slot(p.b))))
        .collect()
}

/// Spearman ρ between predicted cosines and gold scores.
pub fn evaluate(params: &HeadParams, corpus: &Matrix, pairs: &PairDataset) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("evaluation pair set is empty".into()));
    }
    spearman(&predict_pairs(params, corpus, pairs)?, &pairs.gold())
}

/// Named (step, value) series with strictly increasing steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    points: Vec<(u64, f64)>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, step: u64, value: f64) -> Result<()> {
        if let Some(&(last, _)) = self.points.last() {
            if step <= last {
                return Err(Error::Domain(format!(
                    "{}: step {step} does not follow {last}",
                    self.name
                )));
            }
        }
        if !value.is_finite() {
            return Err(Error::Domain(format!(
                "{}: non-finite value at step {step}",
                self.name
            )));
        }
        self.points.push((step, value));
        Ok(())
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn last(&self) -> Option<(u64, f64)> {
        self.points.last().copied()
    }

    pub fn max(&self) -> Option<(u64, f64)> {
        self.points
            .iter()
            .copied()
            .reduce(|a, b| if b.1 > a.1 { b } else { a })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("step\t{}\n", self.name);
        for (s, v) in &self.points {
            writeln!(out, "{s}\t{v}").unwrap();
        }
        out
    }
}
