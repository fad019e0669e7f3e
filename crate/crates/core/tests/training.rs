use dclr_core::adam::AdamState;
use dclr_core::diagnostics::evaluate;
use dclr_core::io::{load_checkpoint, save_checkpoint};
use dclr_core::synth::{generate, SynthConfig, SynthData};
use dclr_core::trainer::{continue_training, run_training, train_step, Trainer, Weighting};
use dclr_core::{HeadParams, TrainConfig, WeightingMode};

fn data(seed: u64) -> SynthData {
    generate(&SynthConfig {
        n: 400,
        d: 32,
        pairs: 120,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn variants(seed: u64) -> Vec<(&'static str, TrainConfig)> {
    let base = TrainConfig {
        seed,
        epochs: 1,
        eval_every: 10,
        ..Default::default()
    };
    vec![
        ("full", base.clone()),
        (
            "w/o noise",
            TrainConfig {
                no_noise: true,
                ..base.clone()
            },
        ),
        (
            "w/o weighting",
            TrainConfig {
                weighting: WeightingMode::Off,
                ..base.clone()
            },
        ),
        (
            "random noise",
            TrainConfig {
                no_noise_update: true,
                ..base.clone()
            },
        ),
        (
            "self weighting",
            TrainConfig {
                weighting: WeightingMode::SelfModel,
                ..base
            },
        ),
    ]
}

/// Mean loss over the first `batches` batches of epoch 0, replaying the same
/// dropout and noise draws.
fn probe_loss(data: &SynthData, cfg: &TrainConfig, params: &HeadParams, batches: u64) -> f64 {
    let mut order = Trainer::new(&data.corpus, Some(&data.reference), cfg.clone()).unwrap();
    let weighting = Weighting::from_config(cfg, Some(&data.reference), params.d_out()).unwrap();
    let mut total = 0.0;
    for step in 0..batches {
        let indices = order.batch_indices(step);
        let mut p = params.clone();
        let mut adam = AdamState::for_head(&p);
        let out = train_step(
            &data.corpus,
            &indices,
            &mut p,
            &mut adam,
            &weighting,
            cfg,
            step,
        )
        .unwrap();
        total += out.metrics.loss;
    }
    total / batches as f64
}

#[test]
fn one_epoch_lowers_the_training_loss_for_every_variant() {
    for seed in 0..5 {
        let data = data(seed);
        for (name, cfg) in variants(seed) {
            let mut trainer =
                Trainer::new(&data.corpus, Some(&data.reference), cfg.clone()).unwrap();
            let initial = probe_loss(&data, &cfg, trainer.params(), 8);
            while !trainer.is_finished() {
                trainer.train_step().unwrap();
            }
            let after = probe_loss(&data, &cfg, trainer.params(), 8);
            assert!(after < initial, "{name}, seed {seed}: {initial} -> {after}");
        }
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let data = data(1);
    let cfg = TrainConfig {
        seed: 9,
        max_steps: Some(40),
        eval_every: 10,
        ..Default::default()
    };

    let mut straight = Trainer::new(&data.corpus, Some(&data.reference), cfg.clone()).unwrap();
    let mut expected = Vec::new();
    while !straight.is_finished() {
        expected.push(straight.train_step().unwrap().metrics);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    let mut first = Trainer::new(&data.corpus, Some(&data.reference), cfg.clone()).unwrap();
    let mut got = Vec::new();
    for _ in 0..17 {
        got.push(first.train_step().unwrap().metrics);
    }
    save_checkpoint(&first.checkpoint(f64::NAN), &path).unwrap();
    let ckpt = load_checkpoint(&path).unwrap();
    let mut second = Trainer::resume(&data.corpus, Some(&data.reference), &ckpt).unwrap();
    while !second.is_finished() {
        got.push(second.train_step().unwrap().metrics);
    }
    assert_eq!(got, expected);
    assert_eq!(second.params(), straight.params());
    assert_eq!(second.adam(), straight.adam());
}

#[test]
fn resumed_training_reproduces_the_best_checkpoint() {
    let data = data(2);
    let cfg = TrainConfig {
        seed: 4,
        max_steps: Some(50),
        eval_every: 25,
        ..Default::default()
    };
    let full = run_training(&data.corpus, Some(&data.reference), &data.pairs, &cfg).unwrap();
    let mut t = Trainer::new(&data.corpus, Some(&data.reference), cfg).unwrap();
    for _ in 0..25 {
        t.train_step().unwrap();
    }
    let mid = t.checkpoint(f64::NAN);
    let rest = Trainer::resume(&data.corpus, Some(&data.reference), &mid).unwrap();
    let resumed = continue_training(rest, &data.corpus, &data.pairs).unwrap();
    assert_eq!(resumed.last.params, full.last.params);
}

#[test]
fn stored_dev_metric_matches_recomputation_after_reload() {
    let data = data(3);
    let cfg = TrainConfig {
        seed: 2,
        max_steps: Some(60),
        eval_every: 20,
        ..Default::default()
    };
    let out = run_training(&data.corpus, Some(&data.reference), &data.pairs, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.ckpt");
    save_checkpoint(&out.best, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(
        evaluate(&back.params, &data.corpus, &data.pairs).unwrap(),
        back.dev_metric
    );
    assert_eq!(back, out.best);
}

#[test]
fn data_fraction_controls_steps_per_epoch() {
    let data = data(4);
    for (fraction, expected) in [(0.25, 6), (0.5, 12), (1.0, 25)] {
        let cfg = TrainConfig {
            data_fraction: fraction,
            epochs: 1,
            seed: 3,
            ..Default::default()
        };
        let t = Trainer::new(&data.corpus, Some(&data.reference), cfg.clone()).unwrap();
        assert_eq!(t.steps_per_epoch(), expected, "fraction {fraction}");
        let a = run_training(&data.corpus, Some(&data.reference), &data.pairs, &cfg).unwrap();
        let b = run_training(&data.corpus, Some(&data.reference), &data.pairs, &cfg).unwrap();
        assert_eq!(a.metrics_tsv(), b.metrics_tsv());
    }
}

#[test]
fn ablations_share_batches_and_dropout() {
    // same seed ⇒ same batch order for every variant, so differences come
    // from the objective alone
    let data = data(5);
    let orders: Vec<Vec<usize>> = variants(11)
        .into_iter()
        .map(|(_, cfg)| {
            let mut t = Trainer::new(&data.corpus, Some(&data.reference), cfg).unwrap();
            (0..5).flat_map(|s| t.batch_indices(s)).collect()
        })
        .collect();
    assert!(orders.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn metrics_log_has_dev_columns_only_at_evaluations() {
    let data = data(6);
    let cfg = TrainConfig {
        seed: 1,
        max_steps: Some(25),
        eval_every: 10,
        ..Default::default()
    };
    let out = run_training(&data.corpus, Some(&data.reference), &data.pairs, &cfg).unwrap();
    let tsv = out.metrics_tsv();
    let rows: Vec<Vec<&str>> = tsv
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 25);
    for row in &rows {
        assert_eq!(row.len(), 6);
        let step: u64 = row[0].parse().unwrap();
        let evaluated = step.is_multiple_of(10) || step == 25;
        assert_eq!(!row[4].is_empty(), evaluated, "step {step}");
    }
}
