//! The training loop: noise bank → instance weights → dropout views,
//! debiased loss, backprop, Adam. Dev Spearman is evaluated every
//! `eval_every` steps and the best checkpoint kept.

use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};

use crate::adam::{adam_step, AdamState};
use crate::config::TrainConfig;
use crate::diagnostics::{
    evaluate, uniformity_loss, MetricSeries, PairSampling, UniformityOptions,
};
use crate::error::{Error, Result};
use crate::head::HeadParams;
use crate::io::{Checkpoint, PairDataset};
use crate::loss::{loss_and_grads, negative_refs, LossBatch};
use crate::matrix::Matrix;
use crate::noise::{init_noise, optimize_noise};
use crate::rng::{stream_rng, Stream};
use crate::weighting::{compute_weights, ComplementaryScorer, WeightMask, WeightingMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    /// 1-based index of the optimizer step just taken.
    pub step: u64,
    pub loss: f64,
    /// ℓ_uniform of the batch's first view.
    pub uniformity: f64,
    pub masked_fraction: f64,
}

/// Metrics plus the batch tensors the step used.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub metrics: StepMetrics,
    pub anchors: Matrix,
    pub positives: Matrix,
    pub bank: Option<Matrix>,
    pub mask: WeightMask,
}

/// Source of complementary similarities for one run.
#[derive(Debug, Clone)]
pub enum Weighting {
    Off,
    Reference(ComplementaryScorer),
    /// Built per batch from the current head.
    SelfModel {
        phi: f64,
    },
}

impl Weighting {
    pub fn from_config(
        cfg: &TrainConfig,
        reference: Option<&Matrix>,
        working_dim: usize,
    ) -> Result<Self> {
        match cfg.weighting {
            WeightingMode::Off => Ok(Weighting::Off),
            WeightingMode::SelfModel => Ok(Weighting::SelfModel { phi: cfg.phi }),
            WeightingMode::Reference => {
                let reference = reference.ok_or_else(|| {
                    Error::Config("reference weighting needs reference embeddings".into())
                })?;
                if reference.cols() != working_dim {
                    return Err(Error::Shape(format!(
                        "reference dimension {} != working dimension {working_dim}",
                        reference.cols()
                    )));
                }
                Ok(Weighting::Reference(ComplementaryScorer::reference(
                    reference.clone(),
                    cfg.phi,
                )?))
            }
        }
    }
}

/// One DCLR update on the sentences `indices`, drawing randomness from the
/// streams of `step_index` (0-based).
pub fn train_step(
    corpus: &Matrix,
    indices: &[usize],
    params: &mut HeadParams,
    adam: &mut AdamState,
    weighting: &Weighting,
    cfg: &TrainConfig,
    step_index: u64,
) -> Result<StepOutput> {
    let b = indices.len();
    let x = corpus.select_rows(indices)?;
    let cache = params.forward_views(&x, &mut stream_rng(cfg.seed, Stream::Dropout, step_index))?;
    let (anchors, positives) = (cache.anchors(), cache.positives());

    // (1) noise bank, optionally pushed toward non-uniform points
    let noise_cfg = cfg.noise();
    let m = if cfg.uses_noise() {
        noise_cfg.bank_size(b)
    } else {
        0
    };
    let bank = if m > 0 {
        let mut rng = stream_rng(cfg.seed, Stream::Noise, step_index);
        let initial = init_noise(&mut rng, m, params.d_out(), noise_cfg.sigma)?;
        let bank = if cfg.no_noise_update {
            initial
        } else {
            optimize_noise(&initial, anchors, positives, &noise_cfg)?
        };
        Some(bank)
    } else {
        None
    };

    // (2) false-negative gating over in-batch and noise negatives
    let mask = match weighting {
        Weighting::Off => WeightMask::all_kept(b, negative_refs(b, 0, cfg.negative_views).len(), m),
        Weighting::Reference(scorer) => {
            compute_weights(scorer, indices, cfg.negative_views, bank.as_ref())?
        }
        Weighting::SelfModel { phi } => {
            let scorer = ComplementaryScorer::snapshot(indices, params.encode(&x)?, *phi)?;
            compute_weights(&scorer, indices, cfg.negative_views, bank.as_ref())?
        }
    };

    // (3) debiased contrastive loss and update
    let bank = bank.map(|b| b.into_matrix());
    let batch = LossBatch {
        anchors,
        positives,
        bank: bank.as_ref(),
        mask: &mask,
        tau: cfg.tau,
        views: cfg.negative_views,
        denominator: cfg.denominator,
    };
    let (loss, grads) = loss_and_grads(&batch)?;
    let uniformity = uniformity_loss(
        anchors,
        &UniformityOptions {
            sampling: PairSampling::Exact,
            normalize: true,
        },
        &mut stream_rng(cfg.seed, Stream::Eval, step_index),
    )?;
    let head_grads = params.head_backward(&cache, &grads.anchors, &grads.positives)?;
    adam_step(params, &head_grads, adam, cfg.lr)?;

    Ok(StepOutput {
        metrics: StepMetrics {
            step: step_index + 1,
            loss,
            uniformity,
            masked_fraction: mask.masked_fraction(),
        },
        anchors: anchors.clone(),
        positives: positives.clone(),
        bank,
        mask,
    })
}

/// Stateful driver over [`train_step`]: subset, epoch shuffles, resumption.
pub struct Trainer<'a> {
    corpus: &'a Matrix,
    cfg: TrainConfig,
    weighting: Weighting,
    subset: Vec<usize>,
    params: HeadParams,
    adam: AdamState,
    step: u64,
    epoch_order: Option<(u64, Vec<usize>)>,
}

impl<'a> Trainer<'a> {
    pub fn new(corpus: &'a Matrix, reference: Option<&Matrix>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if corpus.rows() == 0 {
            return Err(Error::Config("corpus is empty".into()));
        }
        let d = corpus.cols();
        let params = HeadParams::near_identity(
            d,
            cfg.hidden_dim.unwrap_or(d),
            cfg.out_dim.unwrap_or(d),
            cfg.activation,
            cfg.dropout,
            cfg.init_std,
            &mut stream_rng(cfg.seed, Stream::HeadInit, 0),
        )?;
        let adam = AdamState::for_head(&params);
        Self::assemble(corpus, reference, cfg, params, adam, 0)
    }

    /// Continues a run from a checkpoint; subsequent steps match an
    /// uninterrupted run with the same configuration.
    pub fn resume(
        corpus: &'a Matrix,
        reference: Option<&Matrix>,
        ckpt: &Checkpoint,
    ) -> Result<Self> {
        ckpt.config.validate()?;
        if ckpt.params.d_in() != corpus.cols() {
            return Err(Error::Shape(format!(
                "checkpoint expects {}-dimensional inputs, corpus has {}",
                ckpt.params.d_in(),
                corpus.cols()
            )));
        }
        Self::assemble(
            corpus,
            reference,
            ckpt.config.clone(),
            ckpt.params.clone(),
            ckpt.adam.clone(),
            ckpt.step,
        )
    }

    fn assemble(
        corpus: &'a Matrix,
        reference: Option<&Matrix>,
        cfg: TrainConfig,
        params: HeadParams,
        adam: AdamState,
        step: u64,
    ) -> Result<Self> {
        let weighting = Weighting::from_config(&cfg, reference, params.d_out())?;
        if let Some(r) = reference.filter(|_| cfg.weighting == WeightingMode::Reference) {
            if r.rows() != corpus.rows() {
                return Err(Error::Shape(format!(
                    "reference has {} rows, corpus {}",
                    r.rows(),
                    corpus.rows()
                )));
            }
        }
        let subset = data_subset(corpus.rows(), cfg.data_fraction, cfg.seed);
        if subset.len() < cfg.batch_size {
            return Err(Error::Config(format!(
                "{} training sentences cannot fill a batch of {}",
                subset.len(),
                cfg.batch_size
            )));
        }
        Ok(Self {
            corpus,
            cfg,
            weighting,
            subset,
            params,
            adam,
            step,
            epoch_order: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &HeadParams {
        &self.params
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    /// Completed optimizer steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// Full batches per epoch; the partial remainder is dropped.
    pub fn steps_per_epoch(&self) -> u64 {
        (self.subset.len() / self.cfg.batch_size) as u64
    }

    pub fn total_steps(&self) -> u64 {
        let full = self.steps_per_epoch() * self.cfg.epochs as u64;
        self.cfg.max_steps.map_or(full, |cap| cap.min(full))
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.total_steps()
    }

    /// Corpus indices of the batch used at 0-based `step`.
    pub fn batch_indices(&mut self, step: u64) -> Vec<usize> {
        let spe = self.steps_per_epoch();
        let epoch = step / spe;
        let pos = (step % spe) as usize;
        if self.epoch_order.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let mut order = self.subset.clone();
            order.shuffle(&mut stream_rng(self.cfg.seed, Stream::Shuffle, epoch));
            self.epoch_order = Some((epoch, order));
        }
        let order = &self.epoch_order.as_ref().expect("set above").1;
        let b = self.cfg.batch_size;
        order[pos * b..(pos + 1) * b].to_vec()
    }

    pub fn train_step(&mut self) -> Result<StepOutput> {
        if self.is_finished() {
            return Err(Error::Config(format!(
                "training already finished after {} steps",
                self.step
            )));
        }
        let indices = self.batch_indices(self.step);
        let out = train_step(
            self.corpus,
            &indices,
            &mut self.params,
            &mut self.adam,
            &self.weighting,
            &self.cfg,
            self.step,
        )?;
        self.step += 1;
        Ok(out)
    }

    pub fn checkpoint(&self, dev_metric: f64) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            adam: self.adam.clone(),
            step: self.step,
            config: self.cfg.clone(),
            dev_metric,
        }
    }
}

/// Sorted seeded subset of ⌈n·fraction⌉ row indices.
pub fn data_subset(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let keep = ((n as f64 * fraction).ceil() as usize).clamp(1.min(n), n);
    if keep == n {
        return (0..n).collect();
    }
    let mut idx = index::sample(&mut stream_rng(seed, Stream::Subset, 0), n, keep).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub metrics: StepMetrics,
    pub dev_spearman: Option<f64>,
    pub dev_uniformity: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: Vec<LogRow>,
    pub dev_spearman: MetricSeries,
    pub dev_uniformity: MetricSeries,
}

impl TrainOutcome {
    /// `step  train_loss  uniformity  masked_fraction  dev_spearman  dev_uniformity`;
    /// dev columns are empty on steps without evaluation.
    pub fn metrics_tsv(&self) -> String {
        let mut out = String::from(
            "step\ttrain_loss\tuniformity\tmasked_fraction\tdev_spearman\tdev_uniformity\n",
        );
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.log {
            let m = &r.metrics;
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                m.step,
                m.loss,
                m.uniformity,
                m.masked_fraction,
                opt(r.dev_spearman),
                opt(r.dev_uniformity)
            )
            .unwrap();
        }
        out
    }
}

/// ℓ_uniform of the dev sentences under `params`, dropout off.
pub fn dev_uniformity(
    params: &HeadParams,
    corpus: &Matrix,
    dev: &PairDataset,
    seed: u64,
    step: u64,
) -> Result<f64> {
    let reps = params.encode(&corpus.select_rows(&dev.referenced_rows())?)?;
    uniformity_loss(
        &reps,
        &UniformityOptions::default(),
        &mut stream_rng(seed, Stream::Eval, step),
    )
}

/// Trains for the configured epochs (or `max_steps`) and returns the
/// checkpoint with the highest dev Spearman; ties keep the earlier one.
pub fn run_training(
    corpus: &Matrix,
    reference: Option<&Matrix>,
    dev: &PairDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let trainer = Trainer::new(corpus, reference, cfg.clone())?;
    continue_training(trainer, corpus, dev)
}

/// Runs `trainer` to completion with periodic dev evaluation.
pub fn continue_training(
    mut trainer: Trainer<'_>,
    corpus: &Matrix,
    dev: &PairDataset,
) -> Result<TrainOutcome> {
    if dev.is_empty() {
        return Err(Error::Config("dev pair set is empty".into()));
    }
    dev.validate_against(corpus.rows())?;
    let total = trainer.total_steps();
    let every = trainer.config().eval_every;
    let seed = trainer.config().seed;
    let mut log = Vec::new();
    let mut spearman_series = MetricSeries::new("dev_spearman");
    let mut uniformity_series = MetricSeries::new("dev_uniformity");
    let mut best: Option<Checkpoint> = None;
    while !trainer.is_finished() {
        let out = trainer.train_step()?;
        let step = trainer.step();
        let mut row = LogRow {
            metrics: out.metrics,
            dev_spearman: None,
            dev_uniformity: None,
        };
        if step.is_multiple_of(every) || step == total {
            let rho = evaluate(trainer.params(), corpus, dev)?;
            let uni = dev_uniformity(trainer.params(), corpus, dev, seed, step)?;
            spearman_series.push(step, rho)?;
            uniformity_series.push(step, uni)?;
            row.dev_spearman = Some(rho);
            row.dev_uniformity = Some(uni);
            if best.as_ref().is_none_or(|b| rho > b.dev_metric) {
                best = Some(trainer.checkpoint(rho));
            }
        }
        log.push(row);
    }
    let last_metric = spearman_series.last().map_or(f64::NAN, |p| p.1);
    let last = trainer.checkpoint(last_metric);
    let best = best.ok_or_else(|| Error::Config("no training steps were run".into()))?;
    Ok(TrainOutcome {
        best,
        last,
        log,
        dev_spearman: spearman_series,
        dev_uniformity: uniformity_series,
    })
}
