//! Command-line interface. Exit codes: 0 success, 1 invalid input or
//! usage, 2 internal failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, CommandFactory, Parser, Subcommand};
use saldist_core::bench::{self, BenchConfig, BenchRow};
use saldist_core::data::{self, SynthConfig};
use saldist_core::losses::{self, certify};
use saldist_core::metrics::{self, MetricOptions, ShuffleBank};
use saldist_core::net::{self, FcnModel, Init, TrainConfig, TrainLog, Validation};
use saldist_core::pipeline::{self, CenterBiasParams, GtParams};
use saldist_core::{softmax, LossKind, LossSpec, PixelDistribution};
use serde::Serialize;

use crate::config::{self, Config};
use crate::{checkpoint, fixations, jsonl, manifest, pfm, IoError};

#[derive(Debug, Parser)]
#[command(name = "saldist", version, about = "Saliency maps as probability distributions")]
pub struct Cli {
    /// key = value file; flags given on the command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fixation dataset
    Synth(SynthArgs),
    /// Build a ground-truth map from a fixation CSV
    Gtgen(GtgenArgs),
    /// Train the network on a dataset manifest
    Train(TrainArgs),
    /// Predict a saliency distribution for one image
    Predict(PredictArgs),
    /// Score a predicted map against ground truth and fixations
    Eval(EvalArgs),
    /// Check analytic loss and network gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Train the same network with several losses and compare
    Lossbench(LossbenchArgs),
    /// Blur a predicted map and blend it with a center prior
    Postprocess(PostprocessArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GtArgs {
    /// Kernel preset: synth, salicon or osie
    #[arg(long, default_value = "synth")]
    pub gt_preset: String,
    /// Gaussian sigma in pixels; overrides the preset
    #[arg(long)]
    pub gt_sigma: Option<f64>,
    /// Kernel width in taps (even widths are rounded up); defaults to 2*ceil(3 sigma)+1 with --gt-sigma
    #[arg(long)]
    pub gt_width: Option<usize>,
}

impl GtArgs {
    fn params(&self) -> Result<GtParams, CliError> {
        match (self.gt_sigma, self.gt_width) {
            (Some(s), Some(w)) => GtParams::new(w, s).map_err(invalid),
            (Some(s), None) => GtParams::for_sigma(s).map_err(invalid),
            (None, Some(_)) => Err(CliError::Invalid(anyhow!("--gt-width needs --gt-sigma"))),
            (None, None) => GtParams::preset(&self.gt_preset)
                .ok_or_else(|| CliError::Invalid(anyhow!("unknown GT preset {:?}", self.gt_preset))),
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n_images: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// 1 (grayscale) or 3
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    #[arg(long, default_value_t = 1)]
    pub blobs_min: usize,
    #[arg(long, default_value_t = 3)]
    pub blobs_max: usize,
    /// Fixations per image
    #[arg(long, default_value_t = 60)]
    pub fixations: usize,
    /// Share of fixations drawn around the image center
    #[arg(long, default_value_t = 0.3)]
    pub center_bias: f64,
    /// Background noise standard deviation
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[command(flatten)]
    pub gt: GtArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GtgenArgs {
    /// Fixation CSV with a row,col header
    #[arg(long)]
    pub fix: PathBuf,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    #[command(flatten)]
    pub gt: GtArgs,
    /// Write the normalized pre-softmax map instead of the distribution
    #[arg(long)]
    pub logits: bool,
    /// Output PFM
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Training manifest (from `synth`)
    #[arg(long)]
    pub data: PathBuf,
    /// Validation manifest, scored after every epoch
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Checkpoint to write
    #[arg(long)]
    pub out: PathBuf,
    /// Training log (JSON lines)
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// chi2, tv, cosine, bhattacharyya, kl, euclidean or huber
    #[arg(long, default_value = "bhattacharyya")]
    pub loss: LossKind,
    #[arg(long, default_value_t = losses::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub huber_delta: f64,
    /// Base learning rate (per-layer multipliers apply on top)
    #[arg(long, default_value_t = bench::DEFAULT_BASE_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.0005)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = bench::DEFAULT_EPOCHS)]
    pub epochs: usize,
    /// Leading convolutions kept fixed
    #[arg(long, default_value_t = 0)]
    pub frozen_prefix: usize,
    /// Weight init: he (He-scaled trunk, Gaussian head) or gaussian
    #[arg(long, default_value = "he")]
    pub init: String,
    /// Standard deviation of the Gaussian init (the head's, with --init he)
    #[arg(long, default_value_t = net::INIT_SIGMA)]
    pub init_sigma: f64,
    /// Random splits for the validation AUCs
    #[arg(long, default_value_t = 100)]
    pub n_splits: usize,
    #[command(flatten)]
    pub gt: GtArgs,
    /// Seeds weight init, shuffling and validation sampling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input image (PFM, channels must match the model)
    #[arg(long)]
    pub image: PathBuf,
    /// Predicted distribution (PFM)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    /// Predicted map (PFM); normalized to unit sum before scoring
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth map (PFM); built from --fix when omitted
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Fixation CSV for the same image
    #[arg(long)]
    pub fix: PathBuf,
    /// Fixation CSVs of other images on the same grid, the negatives for sAUC
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub shuffle: Vec<PathBuf>,
    /// Comma-separated subset of auc_judd,auc_borji,sauc,cc,nss,sim,emd
    #[arg(long, value_delimiter = ',', default_value = "auc_judd,auc_borji,sauc,cc,nss,sim,emd")]
    pub metrics: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub n_splits: usize,
    /// Negatives per split (default: one per fixation)
    #[arg(long)]
    pub n_neg: Option<usize>,
    /// Maps larger than this per side are downsampled before EMD
    #[arg(long, default_value_t = metrics::DEFAULT_GRID_LIMIT)]
    pub emd_limit: usize,
    #[command(flatten)]
    pub gt_params: GtArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file (JSON lines); stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GradcheckArgs {
    /// Comma-separated losses, or "all"
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub loss: Vec<String>,
    /// Random (p, g) instances per loss
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Finite-difference step in logit space
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest accepted relative error for the loss check
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Also check parameter gradients through the network
    #[arg(long)]
    pub net: bool,
    /// Largest accepted relative error for the network check
    #[arg(long, default_value_t = 1e-4)]
    pub net_tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Results file (JSON lines); stdout is always written
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct LossbenchArgs {
    /// Comma-separated losses, or "all"
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub losses: Vec<String>,
    /// Comma-separated training seeds (weight init and shuffling)
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 500)]
    pub n_train: usize,
    #[arg(long, default_value_t = 100)]
    pub n_val: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    /// Seed of the synthetic dataset
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long, default_value_t = bench::DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = bench::DEFAULT_BASE_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.0005)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub n_splits: usize,
    /// One row per (loss, seed), JSON lines
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch validation curves, JSON lines
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PostprocessArgs {
    /// Predicted map (PFM)
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Blur sigma in pixels; 0 disables the blur
    #[arg(long, default_value_t = 0.0)]
    pub blur_sigma: f64,
    /// Weight of the center prior in the blend
    #[arg(long, default_value_t = 0.0)]
    pub bias_weight: f64,
    /// Center prior sigma as a fraction of the image diagonal
    #[arg(long, default_value_t = 0.25)]
    pub bias_sigma: f64,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input: exit 1.
    Invalid(anyhow::Error),
    /// Anything else: exit 2.
    Internal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Invalid(e.into())
}

fn internal(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Internal(e.into())
}

/// Core errors that stem from the inputs are the caller's fault.
fn core(e: saldist_core::Error) -> CliError {
    use saldist_core::Error as E;
    match e {
        E::Diverged { .. } | E::NonFinite => internal(e),
        _ => invalid(e),
    }
}

/// Errors while reading inputs are validation errors; while writing outputs
/// they are internal.
fn read_err(e: IoError) -> CliError {
    invalid(e)
}

fn write_err(e: IoError) -> CliError {
    internal(e)
}

/// Parses, applies `--config`, runs, and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse(&args) {
        Ok(c) => c,
        Err(Parsed::Exit(code, text, to_stdout)) => {
            let _ = if to_stdout { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let (kind, err) = match &e {
                CliError::Invalid(err) => ("error", err),
                CliError::Internal(err) => ("internal error", err),
            };
            let _ = writeln!(stderr, "{kind}: {err:#}");
            e.exit_code()
        }
    }
}

enum Parsed {
    Exit(i32, String, bool),
}

fn parse(args: &[OsString]) -> Result<Cli, Parsed> {
    let clap_exit = |e: clap::Error| {
        let to_stdout = !e.use_stderr();
        let code = if to_stdout { 0 } else { 1 };
        Parsed::Exit(code, e.render().to_string(), to_stdout)
    };
    let cli = Cli::try_parse_from(args).map_err(clap_exit)?;
    let Some(path) = cli.config.clone() else {
        return Ok(cli);
    };
    let cfg = Config::load(&path).map_err(|e| Parsed::Exit(1, format!("error: {e}\n"), false))?;
    let name = subcommand_name(&cli.command);
    let extra = config_flags(&cfg, name).map_err(|m| Parsed::Exit(1, format!("error: {}: {m}\n", path.display()), false))?;
    // Config flags go right after the subcommand so later (user) flags win.
    let pos = args
        .iter()
        .position(|a| a.to_str() == Some(name))
        .expect("subcommand present after a successful parse");
    let mut merged: Vec<OsString> = args[..=pos].to_vec();
    merged.extend(extra.into_iter().map(OsString::from));
    merged.extend_from_slice(&args[pos + 1..]);
    Cli::try_parse_from(&merged).map_err(clap_exit)
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Gtgen(_) => "gtgen",
        Command::Train(_) => "train",
        Command::Predict(_) => "predict",
        Command::Eval(_) => "eval",
        Command::Gradcheck(_) => "gradcheck",
        Command::Lossbench(_) => "lossbench",
        Command::Postprocess(_) => "postprocess",
    }
}

/// Namespaces each subcommand reads from a config file.
fn namespaces(sub: &str) -> &'static [&'static str] {
    match sub {
        "synth" => &["synth", "gt"],
        "gtgen" | "eval" => &["gt"],
        "train" => &["train", "gt"],
        "lossbench" => &["train", "synth"],
        "postprocess" => &["post"],
        _ => &[],
    }
}

fn long_flags(sub: &str) -> Vec<String> {
    Cli::command()
        .find_subcommand(sub)
        .map(|c| c.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect())
        .unwrap_or_default()
}

/// Flags contributed by the config for `sub`. A key must name a flag of at
/// least one subcommand that reads its namespace; keys that do not apply to
/// `sub` are skipped.
fn config_flags(cfg: &Config, sub: &str) -> Result<Vec<String>, String> {
    let subs = ["synth", "gtgen", "train", "predict", "eval", "gradcheck", "lossbench", "postprocess"];
    let mut out = Vec::new();
    for (key, value) in cfg.entries() {
        let ns = key.split_once('.').map(|(n, _)| n).unwrap_or("");
        let flag = config::flag_for(key).ok_or_else(|| format!("bad key {key}"))?;
        let known = subs
            .iter()
            .any(|s| namespaces(s).contains(&ns) && long_flags(s).contains(&flag));
        if !known {
            return Err(format!("unknown config key {key}"));
        }
        if namespaces(sub).contains(&ns) && long_flags(sub).contains(&flag) {
            out.push(format!("--{flag}"));
            out.push(value.to_string());
        }
    }
    Ok(out)
}

fn emit<T: Serialize>(stdout: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let line = serde_json::to_string(value).map_err(internal)?;
    writeln!(stdout, "{line}").map_err(internal)
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => synth(a, stdout),
        Command::Gtgen(a) => gtgen(a, stdout),
        Command::Train(a) => train(a, stdout),
        Command::Predict(a) => predict(a, stdout),
        Command::Eval(a) => eval(a, stdout),
        Command::Gradcheck(a) => gradcheck(a, stdout),
        Command::Lossbench(a) => lossbench(a, stdout),
        Command::Postprocess(a) => postprocess(a, stdout),
    }
}

fn synth(a: SynthArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = SynthConfig {
        n_images: a.n_images,
        height: a.height,
        width: a.width,
        channels: a.channels,
        blobs_min: a.blobs_min,
        blobs_max: a.blobs_max,
        fixations_per_image: a.fixations,
        center_bias_weight: a.center_bias,
        noise_sigma: a.noise,
        gt: a.gt.params()?,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let samples = data::generate(&cfg).map_err(core)?;
    let manifest = manifest::write_dataset(&a.out, &samples).map_err(write_err)?;
    let cfg_path = a.out.join("synth.json");
    let text = serde_json::to_string_pretty(&cfg).map_err(internal)?;
    std::fs::write(&cfg_path, text + "\n")
        .with_context(|| cfg_path.display().to_string())
        .map_err(internal)?;
    emit(
        stdout,
        &serde_json::json!({
            "command": "synth",
            "seed": a.seed,
            "images": samples.len(),
            "manifest": manifest,
        }),
    )
}

fn gtgen(a: GtgenArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let fix = fixations::read(&a.fix, a.height, a.width).map_err(read_err)?;
    let params = a.gt.params()?;
    let map = if a.logits {
        pipeline::make_gt_logits(&fix, &params).map_err(core)?
    } else {
        pipeline::make_gt_distribution(&fix, &params).map_err(core)?.into_grid()
    };
    pfm::write_map(&a.out, &map).map_err(write_err)?;
    emit(
        stdout,
        &serde_json::json!({
            "command": "gtgen",
            "fixations": fix.len(),
            "kernel_width": params.kernel_width,
            "sigma": params.sigma,
            "out": a.out,
        }),
    )
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine<'a> {
    Config {
        config: &'a TrainConfig,
        init: Init,
        train_images: usize,
        val_images: usize,
    },
    Iteration(&'a net::IterationRecord),
    Epoch(&'a net::EpochRecord),
}

fn loss_spec(kind: LossKind, epsilon: f64, huber_delta: f64) -> Result<LossSpec, CliError> {
    LossSpec::new(kind)
        .with_epsilon(epsilon)
        .and_then(|s| s.with_huber_delta(huber_delta))
        .map_err(core)
}

fn train(a: TrainArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let gt = a.gt.params()?;
    let init = match a.init.as_str() {
        "he" => Init::HeTrunk { head_sigma: a.init_sigma },
        "gaussian" => Init::Gaussian(a.init_sigma),
        other => return Err(invalid(anyhow!("unknown init {other:?} (he or gaussian)"))),
    };
    let config = TrainConfig {
        base_lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        batch_size: a.batch_size,
        epochs: a.epochs,
        loss: loss_spec(a.loss, a.epsilon, a.huber_delta)?,
        seed: a.seed,
        frozen_prefix: a.frozen_prefix,
    };
    config.validate().map_err(core)?;
    let samples = manifest::read_dataset(&a.data, &gt).map_err(read_err)?;
    let val = match &a.val {
        Some(p) => manifest::read_dataset(p, &gt).map_err(read_err)?,
        None => Vec::new(),
    };
    let channels = samples[0].image.channels();
    let model = FcnModel::toy(channels, init, a.seed).map_err(core)?;
    let validation = Validation {
        samples: &val,
        options: MetricOptions {
            n_splits: a.n_splits,
            seed: a.seed,
            ..MetricOptions::loss_table()
        },
    };
    let (trained, log) =
        net::train(&model, &samples, (!val.is_empty()).then_some(&validation), &config).map_err(core)?;
    checkpoint::save(&a.out, &trained).map_err(write_err)?;
    if let Some(path) = &a.log {
        write_log(path, &config, init, samples.len(), val.len(), &log).map_err(write_err)?;
    }
    let last = log.epochs.last();
    emit(
        stdout,
        &serde_json::json!({
            "command": "train",
            "seed": a.seed,
            "loss": a.loss,
            "iterations": log.iterations.len(),
            "final_epoch_loss": last.map(|e| e.mean_loss),
            "validation": last.and_then(|e| e.validation.clone()),
            "out": a.out,
        }),
    )
}

fn write_log(
    path: &Path,
    config: &TrainConfig,
    init: Init,
    train_images: usize,
    val_images: usize,
    log: &TrainLog,
) -> Result<(), IoError> {
    let mut w = jsonl::JsonlWriter::create(path)?;
    w.write(&LogLine::Config {
        config,
        init,
        train_images,
        val_images,
    })?;
    let mut its = log.iterations.iter().peekable();
    for e in &log.epochs {
        // Iterations of an epoch precede its summary.
        while let Some(it) = its.next_if(|it| it.epoch == e.epoch) {
            w.write(&LogLine::Iteration(it))?;
        }
        w.write(&LogLine::Epoch(e))?;
    }
    w.finish()
}

fn predict(a: PredictArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let model = checkpoint::load(&a.model).map_err(read_err)?;
    let image = pfm::read_tensor(&a.image).map_err(read_err)?;
    let p = net::predict(&model, &image).map_err(core)?;
    pfm::write_map(&a.out, p.grid()).map_err(write_err)?;
    let argmax = p.grid().argmax();
    emit(
        stdout,
        &serde_json::json!({
            "command": "predict",
            "height": image.height(),
            "width": image.width(),
            "argmax": [argmax / image.width(), argmax % image.width()],
            "out": a.out,
        }),
    )
}

fn read_distribution(path: &Path) -> Result<PixelDistribution, CliError> {
    let map = pfm::read_map(path).map_err(read_err)?;
    PixelDistribution::normalized(map)
        .with_context(|| format!("{}: not a non-negative map with positive sum", path.display()))
        .map_err(invalid)
}

fn eval(a: EvalArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let pred = read_distribution(&a.pred)?;
    let (h, w) = pred.shape();
    let fix = fixations::read(&a.fix, h, w).map_err(read_err)?;
    let gt = match &a.gt {
        Some(p) => read_distribution(p)?,
        None => pipeline::make_gt_distribution(&fix, &a.gt_params.params()?).map_err(core)?,
    };
    let mut opts = MetricOptions {
        auc_judd: false,
        auc_borji: false,
        sauc: false,
        cc: false,
        nss: false,
        sim: false,
        emd: false,
        n_splits: a.n_splits,
        n_neg: a.n_neg,
        seed: a.seed,
        emd_grid_limit: a.emd_limit,
    };
    for m in &a.metrics {
        let flag = match m.trim() {
            "auc_judd" => &mut opts.auc_judd,
            "auc_borji" => &mut opts.auc_borji,
            "sauc" => &mut opts.sauc,
            "cc" => &mut opts.cc,
            "nss" => &mut opts.nss,
            "sim" => &mut opts.sim,
            "emd" => &mut opts.emd,
            other => return Err(invalid(anyhow!("unknown metric {other:?}"))),
        };
        *flag = true;
    }
    // sAUC needs fixations from other images; without them it is left empty.
    let bank = if a.shuffle.is_empty() {
        None
    } else {
        let sets = a
            .shuffle
            .iter()
            .map(|p| fixations::read(p, h, w).map_err(read_err))
            .collect::<Result<Vec<_>, _>>()?;
        Some(ShuffleBank::new(sets).map_err(core)?)
    };
    let sauc_requested = opts.sauc;
    opts.sauc &= bank.is_some();
    let report = metrics::evaluate(0, &pred, &gt, &fix, bank.as_ref(), &opts).map_err(core)?;
    match &a.out {
        Some(path) => jsonl::write_all(path, std::slice::from_ref(&report)).map_err(write_err)?,
        None => emit(stdout, &report)?,
    }
    if a.out.is_some() {
        emit(
            stdout,
            &serde_json::json!({
                "command": "eval",
                "seed": a.seed,
                "sauc_skipped": sauc_requested && bank.is_none(),
                "out": a.out,
            }),
        )?;
    }
    Ok(())
}

fn parse_losses(names: &[String]) -> Result<Vec<LossKind>, CliError> {
    if names.len() == 1 && names[0] == "all" {
        return Ok(LossKind::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| n.trim().parse::<LossKind>().map_err(|e| invalid(anyhow!("{e}"))))
        .collect()
}

fn gradcheck(a: GradcheckArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let kinds = parse_losses(&a.loss)?;
    if a.trials == 0 {
        return Err(invalid(anyhow!("--trials must be positive")));
    }
    let mut lines = Vec::new();
    let mut failed = Vec::new();
    for &kind in &kinds {
        let c = certify(&LossSpec::new(kind), a.trials, a.step, a.seed).map_err(core)?;
        let pass = c.max_relative_error <= a.tolerance;
        if !pass {
            failed.push(kind.name().to_string());
        }
        lines.push(serde_json::json!({
            "check": "loss",
            "loss": kind,
            "trials": c.trials,
            "resampled": c.resampled,
            "max_relative_error": c.max_relative_error,
            "max_gradient_sum": c.max_gradient_sum,
            "tolerance": a.tolerance,
            "step": a.step,
            "seed": a.seed,
            "pass": pass,
        }));
    }
    if a.net {
        let sample = data::generate_one(
            &SynthConfig {
                n_images: 1,
                height: 16,
                width: 16,
                fixations_per_image: 20,
                seed: a.seed,
                ..SynthConfig::default()
            },
            0,
        )
        .map_err(core)?;
        let model = FcnModel::toy(1, Init::HeTrunk { head_sigma: 0.1 }, a.seed).map_err(core)?;
        let p = softmax(&model.forward(&sample.image).map_err(core)?).map_err(core)?;
        let target = net_target(&p);
        for &kind in &kinds {
            let checks = net::gradient_check(&model, &sample.image, &target, &LossSpec::new(kind), 1e-3)
                .map_err(core)?;
            let worst = checks.iter().map(|c| c.weights.max(c.bias)).fold(0.0, f64::max);
            let pass = worst <= a.net_tolerance;
            if !pass {
                failed.push(format!("net/{}", kind.name()));
            }
            lines.push(serde_json::json!({
                "check": "net",
                "loss": kind,
                "layers": checks,
                "max_relative_error": worst,
                "tolerance": a.net_tolerance,
                "step": 1e-3,
                "seed": a.seed,
                "pass": pass,
            }));
        }
    }
    for l in &lines {
        emit(stdout, l)?;
    }
    if let Some(path) = &a.out {
        jsonl::write_all(path, &lines).map_err(write_err)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(internal(anyhow!("gradient check failed for {}", failed.join(", "))))
    }
}

/// Target whose pixels all differ from `p` by a clear margin, so the total
/// variation loss is smooth around the check point.
fn net_target(p: &PixelDistribution) -> PixelDistribution {
    let (h, w) = p.shape();
    let vals: Vec<f64> = p
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * if i % 2 == 0 { 1.6 } else { 0.5 })
        .collect();
    PixelDistribution::normalized(saldist_core::GridMap::new(h, w, vals).expect("finite"))
        .expect("positive distribution")
}

#[derive(Serialize)]
struct CurveLine<'a> {
    loss: LossKind,
    seed: u64,
    #[serde(flatten)]
    epoch: &'a net::EpochRecord,
}

#[derive(Serialize)]
struct RowLine<'a> {
    loss: LossKind,
    seed: u64,
    data_seed: u64,
    epochs: usize,
    base_lr: f64,
    final_train_loss: f64,
    validation: &'a metrics::MetricSummary,
}

fn lossbench(a: LossbenchArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = BenchConfig {
        losses: parse_losses(&a.losses)?,
        seeds: a.seeds.clone(),
        synth: SynthConfig {
            height: a.height,
            width: a.width,
            seed: a.data_seed,
            ..SynthConfig::default()
        },
        n_train: a.n_train,
        n_val: a.n_val,
        epochs: a.epochs,
        base_lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        batch_size: a.batch_size,
        metrics: MetricOptions {
            n_splits: a.n_splits,
            ..MetricOptions::loss_table()
        },
        curves: a.curves.is_some(),
        ..BenchConfig::default()
    };
    let mut rows_out = jsonl::JsonlWriter::create(&a.out).map_err(write_err)?;
    let mut curves_out = match &a.curves {
        Some(p) => Some(jsonl::JsonlWriter::create(p).map_err(write_err)?),
        None => None,
    };
    let mut io_failure = None;
    let rows: Vec<BenchRow> = bench::run_with(&cfg, |r| {
        let row = RowLine {
            loss: r.loss,
            seed: r.seed,
            data_seed: a.data_seed,
            epochs: a.epochs,
            base_lr: a.lr,
            final_train_loss: r.final_train_loss,
            validation: &r.validation,
        };
        let mut res = rows_out.write(&row);
        if let Some(c) = curves_out.as_mut() {
            for e in &r.curve {
                res = res.and_then(|_| c.write(&CurveLine { loss: r.loss, seed: r.seed, epoch: e }));
            }
        }
        if let Err(e) = res {
            io_failure.get_or_insert(e);
        }
    })
    .map_err(core)?;
    if let Some(e) = io_failure {
        return Err(write_err(e));
    }
    rows_out.finish().map_err(write_err)?;
    if let Some(c) = curves_out {
        c.finish().map_err(write_err)?;
    }
    let means = bench::means(&rows);
    let (cc_dist, cc_regr) = bench::group_ranks(&means, |m| m.cc);
    let (sauc_dist, sauc_regr) = bench::group_ranks(&means, |m| m.sauc);
    emit(
        stdout,
        &serde_json::json!({
            "command": "lossbench",
            "seeds": a.seeds,
            "data_seed": a.data_seed,
            "means": means,
            "mean_rank": {
                "cc": {"distance": cc_dist, "regression": cc_regr},
                "sauc": {"distance": sauc_dist, "regression": sauc_regr},
            },
            "out": a.out,
        }),
    )
}

fn postprocess(a: PostprocessArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let p = read_distribution(&a.pred)?;
    let params = CenterBiasParams {
        blur_sigma: a.blur_sigma,
        bias_weight: a.bias_weight,
        bias_sigma: a.bias_sigma,
    };
    let out = pipeline::center_bias_postprocess(&p, &params).map_err(core)?;
    pfm::write_map(&a.out, out.grid()).map_err(write_err)?;
    emit(
        stdout,
        &serde_json::json!({
            "command": "postprocess",
            "blur_sigma": a.blur_sigma,
            "bias_weight": a.bias_weight,
            "bias_sigma": a.bias_sigma,
            "out": a.out,
        }),
    )
}
