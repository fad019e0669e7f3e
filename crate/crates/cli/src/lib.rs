//! Subcommands of the `dclr` binary.
//!
//! Every command checks its flags before reading or writing any file, and
//! reports success only after all of its outputs are on disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dclr_core::diagnostics::{
    audit_negatives, cap_fraction, predict_pairs, spearman, uniformity_loss, UniformityOptions,
    HIGH_SIMILARITY,
};
use dclr_core::gradcheck::{self_check, SelfCheckReport};
use dclr_core::io::{
    load_checkpoint, load_embeddings, load_pair_dataset, save_checkpoint, save_embeddings,
    save_pair_dataset, write_atomic, EmbeddingFormat, EmbeddingMatrix,
};
use dclr_core::noise::{ascent_step, init_noise, nonuniformity_loss, NoiseBank};
use dclr_core::rng::{stream_rng, Stream};
use dclr_core::synth::{generate, recipe, SynthConfig};
use dclr_core::trainer::{run_training, TrainOutcome, Trainer};
use dclr_core::{
    Activation, Denominator, HeadParams, Matrix, NegativeViews, PairDataset, TrainConfig,
    WeightingMode,
};

/// Environment variable that overrides `--seed` when set.
pub const SEED_ENV: &str = "DCLR_SEED";

/// Gradient-check cases run by `--self-check`.
pub const SELF_CHECK_CASES: usize = 50;

#[derive(Debug, Parser)]
#[command(
    name = "dclr",
    version,
    about = "Debiased contrastive refinement of sentence embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a projection head and keep the best dev checkpoint.
    Train(TrainArgs),
    /// Spearman correlation of a checkpoint (or raw embeddings) on a pair file.
    Eval(EvalArgs),
    /// Histogram of in-batch negative similarities and uniformity.
    Audit(AuditArgs),
    /// One training run per value of φ or k.
    Sweep(SweepArgs),
    /// Dump one batch's noise bank before and after gradient ascent.
    NoiseDebug(NoiseDebugArgs),
    /// Generate anisotropic clustered embeddings with scored pairs.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    /// `.tsv`/`.txt` files are text, anything else binary.
    Auto,
    Binary,
    Tsv,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Sentence embedding matrix.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Auto)]
    pub format: FormatArg,
    /// TSV rows start with a sentence id column.
    #[arg(long)]
    pub with_ids: bool,
}

impl InputArgs {
    fn format_for(&self, path: &Path) -> EmbeddingFormat {
        resolve_format(self.format, path, self.with_ids)
    }

    fn load(&self) -> Result<Matrix> {
        load_matrix(&self.embeddings, self.format_for(&self.embeddings))
    }
}

fn resolve_format(format: FormatArg, path: &Path, with_ids: bool) -> EmbeddingFormat {
    match format {
        FormatArg::Auto => EmbeddingFormat::from_path(path, with_ids),
        FormatArg::Binary => EmbeddingFormat::Binary,
        FormatArg::Tsv if with_ids => EmbeddingFormat::TsvWithIds,
        FormatArg::Tsv => EmbeddingFormat::Tsv,
    }
}

fn load_matrix(path: &Path, format: EmbeddingFormat) -> Result<Matrix> {
    let m = load_embeddings(path, format).with_context(|| format!("loading {}", path.display()))?;
    Ok(m.to_matrix())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Reference,
    #[value(name = "self")]
    SelfModel,
    Off,
}

impl From<WeightingArg> for WeightingMode {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Reference => WeightingMode::Reference,
            WeightingArg::SelfModel => WeightingMode::SelfModel,
            WeightingArg::Off => WeightingMode::Off,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Tanh,
    Identity,
}

/// Training hyperparameters; defaults match [`TrainConfig::default`].
#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    /// Reference embeddings for false-negative gating, row-aligned with
    /// `--embeddings`.
    #[arg(long)]
    pub reference_embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub tau: f64,
    /// Temperature of the noise ascent objective; defaults to `--tau`.
    #[arg(long)]
    pub tau_u: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub beta: f64,
    #[arg(long = "t-steps", alias = "t", default_value_t = 4)]
    pub t_steps: usize,
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    #[arg(long, default_value_t = 0.9, allow_negative_numbers = true)]
    pub phi: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 150)]
    pub eval_every: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub data_fraction: f64,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub no_noise: bool,
    /// Keep the Gaussian noise bank as drawn.
    #[arg(long)]
    pub no_noise_update: bool,
    #[arg(long, value_enum, default_value_t = WeightingArg::Reference)]
    pub weighting: WeightingArg,
    /// Leave the positive pair out of the softmax denominator.
    #[arg(long)]
    pub literal_denominator: bool,
    /// Use only the positive views of other sentences as in-batch negatives.
    #[arg(long)]
    pub single_view_negatives: bool,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub out_dim: Option<usize>,
    #[arg(long, value_enum, default_value_t = ActivationArg::Tanh)]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = 0.01)]
    pub init_std: f64,
}

/// `DCLR_SEED` wins over the flag when set.
pub fn resolve_seed(flag: u64, env: Option<&str>) -> Result<u64> {
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| anyhow!("{SEED_ENV} must be an unsigned integer, got {v:?}")),
        None => Ok(flag),
    }
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

impl HyperArgs {
    /// Builds and validates the configuration, collecting every problem.
    pub fn to_config(&self, env: Option<&str>) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            tau: self.tau,
            tau_u: self.tau_u.unwrap_or(self.tau),
            sigma: self.sigma,
            beta: self.beta,
            t_steps: self.t_steps,
            k: self.k,
            phi: self.phi,
            dropout: self.dropout,
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            eval_every: self.eval_every,
            seed: resolve_seed(self.seed, env)?,
            data_fraction: self.data_fraction,
            max_steps: self.max_steps,
            no_noise: self.no_noise,
            no_noise_update: self.no_noise_update,
            weighting: self.weighting.into(),
            denominator: if self.literal_denominator {
                Denominator::Literal
            } else {
                Denominator::WithPositive
            },
            negative_views: if self.single_view_negatives {
                NegativeViews::Single
            } else {
                NegativeViews::Both
            },
            hidden_dim: self.hidden_dim,
            out_dim: self.out_dim,
            activation: match self.activation {
                ActivationArg::Tanh => Activation::Tanh,
                ActivationArg::Identity => Activation::Identity,
            },
            init_std: self.init_std,
        };
        let mut problems = cfg.problems();
        if self.tau_u.is_none() {
            // τ_u inherits τ; one message is enough
            problems.retain(|p| !p.starts_with("tau_u"));
        }
        if cfg.weighting == WeightingMode::Reference && self.reference_embeddings.is_none() {
            problems.push("--weighting reference needs --reference-embeddings".into());
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            bail!("{}", problems.join("\n"))
        }
    }

    fn load_reference(&self, input: &InputArgs, cfg: &TrainConfig) -> Result<Option<Matrix>> {
        match (&self.reference_embeddings, cfg.weighting) {
            (Some(path), WeightingMode::Reference) => {
                Ok(Some(load_matrix(path, input.format_for(path))?))
            }
            _ => Ok(None),
        }
    }
}

fn load_pairs(path: &Path, n: usize) -> Result<PairDataset> {
    let pairs = load_pair_dataset(path).with_context(|| format!("loading {}", path.display()))?;
    pairs
        .validate_against(n)
        .with_context(|| format!("checking {}", path.display()))?;
    Ok(pairs)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let env = env_seed();
    let env = env.as_deref();
    match cli.command {
        Command::Train(a) => cmd_train(&a, env).map(|s| println!("{s}")),
        Command::Eval(a) => cmd_eval(&a).map(|s| println!("{s}")),
        Command::Audit(a) => cmd_audit(&a, env).map(|s| print!("{s}")),
        Command::Sweep(a) => cmd_sweep(&a, env).map(|s| print!("{s}")),
        Command::NoiseDebug(a) => cmd_noise_debug(&a, env).map(|s| print!("{s}")),
        Command::Synth(a) => cmd_synth(&a, env).map(|s| print!("{s}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Scored pairs used for checkpoint selection.
    #[arg(long)]
    pub dev: PathBuf,
    /// Output directory for `best.ckpt`, `metrics.tsv` and `uniformity.tsv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Run the gradient checks first and refuse to train if they fail.
    #[arg(long)]
    pub self_check: bool,
}

pub fn run_self_check(seed: u64) -> Result<SelfCheckReport> {
    let report = self_check(seed, SELF_CHECK_CASES)?;
    if !report.passed() {
        bail!(
            "self-check failed: noise gradient error {:.3e}, loss gradient error {:.3e}, head gradient error {:.3e}",
            report.noise_max_error,
            report.loss_max_error,
            report.head_max_error
        );
    }
    Ok(report)
}

fn write_outcome(out: &Path, outcome: &TrainOutcome) -> Result<()> {
    create_dir(out)?;
    save_checkpoint(&outcome.best, out.join("best.ckpt"))?;
    write_text(&out.join("metrics.tsv"), &outcome.metrics_tsv())?;
    write_text(
        &out.join("uniformity.tsv"),
        &outcome.dev_uniformity.to_tsv(),
    )?;
    Ok(())
}

/// Returns the final report line.
pub fn cmd_train(args: &TrainArgs, env: Option<&str>) -> Result<String> {
    let cfg = args.hyper.to_config(env)?;
    if args.self_check {
        run_self_check(cfg.seed)?;
    }
    let corpus = args.input.load()?;
    let reference = args.hyper.load_reference(&args.input, &cfg)?;
    let dev = load_pairs(&args.dev, corpus.rows())?;
    let outcome = run_training(&corpus, reference.as_ref(), &dev, &cfg)?;
    write_outcome(&args.out, &outcome)?;
    Ok(format!(
        "best dev spearman {} at step {}",
        outcome.best.dev_metric, outcome.best.step
    ))
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Trained checkpoint; without one the raw embeddings are scored.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, alias = "dev")]
    pub pairs: PathBuf,
    /// Per-pair `a  b  gold  predicted` dump.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String> {
    let ckpt = args
        .checkpoint
        .as_ref()
        .map(|p| load_checkpoint(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let corpus = args.input.load()?;
    let params = ckpt.map_or_else(|| HeadParams::identity(corpus.cols()), |c| c.params);
    let pairs = load_pairs(&args.pairs, corpus.rows())?;
    let predicted = predict_pairs(&params, &corpus, &pairs)?;
    let rho = spearman(&predicted, &pairs.gold())?;
    if let Some(path) = &args.predictions {
        let mut out = String::from("a\tb\tgold\tpredicted\n");
        for (p, s) in pairs.pairs().iter().zip(&predicted) {
            writeln!(out, "{}\t{}\t{}\t{}", p.a, p.b, p.gold, s)?;
        }
        write_text(path, &out)?;
    }
    Ok(format!("spearman {rho}"))
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Encode through this checkpoint's head first.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Histogram TSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4096)]
    pub max_anchors: usize,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

/// Returns `key value` summary lines.
pub fn cmd_audit(args: &AuditArgs, env: Option<&str>) -> Result<String> {
    let seed = resolve_seed(args.seed, env)?;
    let mut problems = Vec::new();
    if args.batch_size < 2 {
        problems.push("batch size must be >= 2".to_string());
    }
    if args.bins == 0 {
        problems.push("bins must be >= 1".to_string());
    }
    if args.max_anchors == 0 {
        problems.push("max anchors must be >= 1".to_string());
    }
    if !problems.is_empty() {
        bail!("{}", problems.join("\n"));
    }
    let params = args
        .checkpoint
        .as_ref()
        .map(|p| load_checkpoint(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?
        .map(|c| c.params);
    let mut reps = args.input.load()?;
    if let Some(params) = &params {
        reps = params.encode(&reps)?;
    }
    let hist = audit_negatives(
        &reps,
        args.batch_size,
        args.max_anchors,
        args.bins,
        &mut stream_rng(seed, Stream::Eval, 0),
    )?;
    let uniformity = uniformity_loss(
        &reps,
        &UniformityOptions::default(),
        &mut stream_rng(seed, Stream::Eval, 1),
    )?;
    write_text(&args.out, &hist.to_tsv())?;
    let mut s = String::new();
    writeln!(s, "negatives {}", hist.total())?;
    writeln!(s, "fraction_high {}", hist.fraction_high())?;
    writeln!(s, "high_threshold {HIGH_SIMILARITY}")?;
    writeln!(
        s,
        "sphere_baseline {}",
        cap_fraction(reps.cols(), HIGH_SIMILARITY)
    )?;
    writeln!(s, "uniformity {uniformity}")?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Phi,
    K,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridValue {
    Value(f64),
    /// Weighting disabled (φ only).
    Off,
}

impl std::fmt::Display for GridValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridValue::Value(v) => write!(f, "{v}"),
            GridValue::Off => f.write_str("off"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated grid; `off` disables weighting in a φ sweep.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_negative_numbers = true
    )]
    pub values: Vec<String>,
    /// `value  dev_spearman  final_uniformity` table.
    #[arg(long)]
    pub out: PathBuf,
    /// Long-format per-evaluation curves for every grid point.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

pub fn parse_grid(param: SweepParam, values: &[String]) -> Result<Vec<GridValue>> {
    let mut grid = Vec::new();
    let mut problems = Vec::new();
    for raw in values {
        let v = raw.trim();
        if v.eq_ignore_ascii_case("off") {
            if param == SweepParam::Phi {
                grid.push(GridValue::Off);
            } else {
                problems.push("`off` is only meaningful in a phi sweep".to_string());
            }
            continue;
        }
        match v.parse::<f64>() {
            Ok(x) if param == SweepParam::K && !(x.is_finite() && x >= 0.0) => {
                problems.push(format!("k must be >= 0, got {x}"))
            }
            Ok(x) if !x.is_finite() => problems.push(format!("grid value {x} is not finite")),
            Ok(x) => grid.push(GridValue::Value(x)),
            Err(_) => problems.push(format!("grid value {v:?} is not a number")),
        }
    }
    if grid.is_empty() && problems.is_empty() {
        problems.push("sweep grid is empty".to_string());
    }
    if !problems.is_empty() {
        bail!("{}", problems.join("\n"));
    }
    Ok(grid)
}

fn grid_config(base: &TrainConfig, param: SweepParam, value: &GridValue) -> TrainConfig {
    let mut cfg = base.clone();
    match (param, value) {
        (_, GridValue::Off) => cfg.weighting = WeightingMode::Off,
        (SweepParam::Phi, GridValue::Value(v)) => cfg.phi = *v,
        (SweepParam::K, GridValue::Value(v)) => cfg.k = *v,
    }
    cfg
}

/// Returns the sweep table, also written to `--out`.
pub fn cmd_sweep(args: &SweepArgs, env: Option<&str>) -> Result<String> {
    let base = args.hyper.to_config(env)?;
    let grid = parse_grid(args.param, &args.values)?;
    let configs: Vec<TrainConfig> = grid
        .iter()
        .map(|v| grid_config(&base, args.param, v))
        .collect();
    for cfg in &configs {
        cfg.validate()?;
    }
    let corpus = args.input.load()?;
    let reference = args.hyper.load_reference(&args.input, &base)?;
    let dev = load_pairs(&args.dev, corpus.rows())?;

    let name = match args.param {
        SweepParam::Phi => "phi",
        SweepParam::K => "k",
    };
    let mut table = format!("{name}\tdev_spearman\tfinal_uniformity\n");
    let mut curves = format!("{name}\tstep\tdev_spearman\tdev_uniformity\n");
    for (value, cfg) in grid.iter().zip(&configs) {
        let outcome = run_training(&corpus, reference.as_ref(), &dev, cfg)?;
        let final_uniformity = outcome.dev_uniformity.last().map_or(f64::NAN, |p| p.1);
        writeln!(
            table,
            "{value}\t{}\t{final_uniformity}",
            outcome.best.dev_metric
        )?;
        for (&(step, rho), &(_, u)) in outcome
            .dev_spearman
            .points()
            .iter()
            .zip(outcome.dev_uniformity.points())
        {
            writeln!(curves, "{value}\t{step}\t{rho}\t{u}")?;
        }
    }
    write_text(&args.out, &table)?;
    if let Some(path) = &args.curves {
        write_text(path, &curves)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, Args)]
pub struct NoiseDebugArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Head to encode the batch with; a fresh one otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Writes `<prefix>.before.emb` and `<prefix>.after.emb`.
    #[arg(long)]
    pub out_prefix: PathBuf,
    /// Training step whose batch, dropout and noise draws are replayed.
    #[arg(long, default_value_t = 0)]
    pub step: u64,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Returns one `iteration  nonuniformity_loss` line per ascent step.
pub fn cmd_noise_debug(args: &NoiseDebugArgs, env: Option<&str>) -> Result<String> {
    let mut cfg = args.hyper.to_config(env)?;
    if !cfg.uses_noise() {
        bail!("noise is disabled (k = 0 or --no-noise); nothing to debug");
    }
    // gating plays no part in the ascent
    cfg.weighting = WeightingMode::Off;
    let ckpt = args
        .checkpoint
        .as_ref()
        .map(|p| load_checkpoint(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let corpus = args.input.load()?;
    let mut trainer = Trainer::new(&corpus, None, cfg.clone())?;
    if args.step >= trainer.total_steps() {
        bail!(
            "step {} is beyond the run's {} steps",
            args.step,
            trainer.total_steps()
        );
    }
    let params = ckpt.map_or_else(|| trainer.params().clone(), |c| c.params);
    let indices = trainer.batch_indices(args.step);
    let x = corpus.select_rows(&indices)?;
    let cache = params.forward_views(&x, &mut stream_rng(cfg.seed, Stream::Dropout, args.step))?;
    let noise_cfg = cfg.noise();
    let m = noise_cfg.bank_size(indices.len());
    let mut bank = init_noise(
        &mut stream_rng(cfg.seed, Stream::Noise, args.step),
        m,
        params.d_out(),
        noise_cfg.sigma,
    )?;
    let before = bank.clone();
    let mut log = String::from("iteration\tnonuniformity_loss\n");
    let loss_of =
        |b: &NoiseBank| nonuniformity_loss(cache.anchors(), cache.positives(), b, noise_cfg.tau_u);
    writeln!(log, "0\t{}", loss_of(&bank)?)?;
    for it in 1..=noise_cfg.t_steps {
        bank = ascent_step(
            &bank,
            cache.anchors(),
            cache.positives(),
            noise_cfg.beta,
            noise_cfg.tau_u,
        )?;
        writeln!(log, "{it}\t{}", loss_of(&bank)?)?;
    }
    for (suffix, b) in [(".before.emb", &before), (".after.emb", &bank)] {
        let path = with_suffix(&args.out_prefix, suffix);
        let emb = EmbeddingMatrix::from_matrix(b.vectors())?;
        save_embeddings(&emb, &path, EmbeddingFormat::Binary)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(log)
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Writes `<prefix>.emb`, `<prefix>.ref.emb`, `<prefix>.pairs.tsv` and
    /// `<prefix>.meta.json`.
    #[arg(long)]
    pub out_prefix: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Cone half-angle in degrees; 90 keeps directions isotropic.
    #[arg(long, default_value_t = 20.0)]
    pub half_angle: f64,
    #[arg(long, default_value_t = 16)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0.3)]
    pub spread: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 500)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn cmd_synth(args: &SynthArgs, env: Option<&str>) -> Result<String> {
    let cfg = SynthConfig {
        n: args.n,
        d: args.d,
        half_angle_deg: args.half_angle,
        clusters: args.clusters,
        spread: args.spread,
        noise: args.noise,
        pairs: args.pairs,
        seed: resolve_seed(args.seed, env)?,
    };
    cfg.validate()?;
    let data = generate(&cfg)?;
    let paths =
        [".emb", ".ref.emb", ".pairs.tsv", ".meta.json"].map(|s| with_suffix(&args.out_prefix, s));
    if let Some(dir) = paths[0].parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    for (m, path) in [(&data.corpus, &paths[0]), (&data.reference, &paths[1])] {
        save_embeddings(
            &EmbeddingMatrix::from_matrix(m)?,
            path,
            EmbeddingFormat::Binary,
        )
        .with_context(|| format!("writing {}", path.display()))?;
    }
    save_pair_dataset(&data.pairs, &paths[2])
        .with_context(|| format!("writing {}", paths[2].display()))?;
    write_text(&paths[3], &serde_json::to_string_pretty(&recipe(&cfg))?)?;
    let mut s = String::new();
    for p in &paths {
        writeln!(s, "wrote {}", p.display())?;
    }
    Ok(s)
}
