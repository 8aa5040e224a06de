//! Command-line wiring: dataset generation, training, evaluation, gradient
//! auditing and multi-arm hyper-parameter sweeps, all reproducible from
//! flags plus a seed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_dataset, save_dataset, FeatureDataset, Split, SyntheticSpec};
use crate::loss::LadderConfig;
use crate::metrics::{write_report_rows, EvalReport};
use crate::trainer::{
    evaluate_split, finite_difference_audit, load_checkpoint, save_checkpoint, train, LossFamily,
    TrainConfig, TrainError, TrainLog,
};

/// Process exit codes: 0 success, 2 configuration errors, 1 runtime failures.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<crate::data::DataError> for CliError {
    fn from(e: crate::data::DataError) -> Self {
        match e {
            crate::data::DataError::InvalidSpec(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<crate::metrics::MetricsError> for CliError {
    fn from(e: crate::metrics::MetricsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("io error on {}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "coherent-embed", about = "Joint bimodal embedding training and retrieval evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset directory
    Gen(GenArgs),
    /// Train an encoder pair and write a checkpoint plus a per-epoch log
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split
    Eval(EvalArgs),
    /// Train and evaluate several configuration arms under shared seeds
    Sweep(SweepArgs),
    /// Audit analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub dx: usize,
    #[arg(long, default_value_t = 64)]
    pub dy: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 32)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0.45)]
    pub spread: f64,
    #[arg(long, default_value_t = 0.5)]
    pub center_spread: f64,
    #[arg(long, default_value_t = 3.0)]
    pub sharpness: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Training hyper-parameter flags; every flag overrides the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct TrainFlags {
    /// JSON experiment config; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub loss: Option<LossFamily>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay_epoch: Option<usize>,
    #[arg(long)]
    pub lr_decayed: Option<f64>,
    /// Level thresholds, e.g. `0.63,0.56`
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Per-level margins, e.g. `0.2,0.01`
    #[arg(long, value_delimiter = ',')]
    pub margins: Option<Vec<f64>>,
    /// Per-level weights, e.g. `1,0.25`
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Evaluation cutoffs for the per-epoch validation metrics
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 100])]
    pub ks: Vec<usize>,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 100])]
    pub ks: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// JSON experiment config declaring the arms, seeds and dataset
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub probes: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Test hook: offset added to every analytic gradient before comparison
    #[arg(long, default_value_t = 0.0)]
    pub corrupt: f64,
    #[command(flatten)]
    pub flags: TrainFlags,
}

/// One named configuration arm of a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Arm {
    pub name: String,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_ks() -> Vec<usize> {
    vec![10, 100]
}

/// Serializable experiment description; the config-file counterpart of the
/// CLI flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Dataset directory; alternative to `synthetic`
    pub dataset: Option<PathBuf>,
    /// Inline synthetic generator spec; alternative to `dataset`
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub arms: Vec<Arm>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            synthetic: None,
            train: TrainConfig::default(),
            ks: default_ks(),
            arms: Vec::new(),
            seeds: Vec::new(),
        }
    }
}

fn load_experiment_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Merges flag overrides into the config-file training configuration.
fn merge_train_config(flags: &TrainFlags, base: TrainConfig) -> Result<TrainConfig, CliError> {
    let mut cfg = base;
    if let Some(loss) = flags.loss {
        cfg.family = loss;
    }
    if let Some(v) = flags.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.embed_dim {
        cfg.embed_dim = v;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.lr {
        cfg.lr_initial = v;
    }
    if let Some(v) = flags.lr_decay_epoch {
        cfg.lr_decay_epoch = v;
    }
    if let Some(v) = flags.lr_decayed {
        cfg.lr_decayed = v;
    }
    if flags.thresholds.is_some() || flags.margins.is_some() || flags.weights.is_some() {
        let thresholds = flags
            .thresholds
            .clone()
            .unwrap_or_else(|| cfg.ladder.thresholds.clone());
        let margins = flags
            .margins
            .clone()
            .unwrap_or_else(|| cfg.ladder.margins.clone());
        let weights = flags
            .weights
            .clone()
            .unwrap_or_else(|| cfg.ladder.weights.clone());
        cfg.ladder = LadderConfig::new(thresholds, margins, weights, cfg.ladder.sampling)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn resolve_train_config(flags: &TrainFlags) -> Result<(TrainConfig, ExperimentConfig), CliError> {
    let experiment = match &flags.config {
        Some(path) => load_experiment_config(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = merge_train_config(flags, experiment.train.clone())?;
    Ok((cfg, experiment))
}

fn load_dataset_checked(path: &Path, cfg: &TrainConfig) -> Result<FeatureDataset, CliError> {
    let dataset = load_dataset(path)?;
    if matches!(cfg.family, LossFamily::Ladder | LossFamily::LadderHc)
        && !dataset.explicit_relevance
    {
        return Err(CliError::Config(format!(
            "dataset {} has no relevance scores; ladder losses need a relevance file",
            path.display()
        )));
    }
    Ok(dataset)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, json).map_err(io_err(path))
}

fn metric_columns(ks: &[usize]) -> Vec<String> {
    let mut cols = Vec::new();
    for direction in ["x_to_y", "y_to_x"] {
        for k in ks {
            cols.push(format!("{direction}_cs@{k}"));
        }
        for name in ["r1", "r5", "r10", "mean_rank"] {
            cols.push(format!("{direction}_{name}"));
        }
    }
    cols
}

fn metric_values(report: &EvalReport, ks: &[usize]) -> Vec<String> {
    let mut vals = Vec::new();
    for direction in ["x_to_y", "y_to_x"] {
        let d = report.direction(direction);
        for k in ks {
            // K may have been clamped to the split size during evaluation
            let cs = d.and_then(|d| d.cs_mean.get(&(*k).min(d.n_queries)));
            vals.push(cs.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}")));
        }
        match d {
            Some(d) => {
                vals.push(format!("{:.4}", d.r1));
                vals.push(format!("{:.4}", d.r5));
                vals.push(format!("{:.4}", d.r10));
                vals.push(format!("{:.4}", d.mean_rank));
            }
            None => vals.extend(std::iter::repeat_n("nan".to_string(), 4)),
        }
    }
    vals
}

fn write_train_log(log: &TrainLog, ks: &[usize], path: &Path) -> Result<(), CliError> {
    let mut out = String::from("epoch,loss,");
    out.push_str(&metric_columns(ks).join(","));
    out.push('\n');
    for e in &log.epochs {
        out.push_str(&format!("{},{:.8},", e.epoch, e.train_loss));
        out.push_str(&metric_values(&e.validation, ks).join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let spec = SyntheticSpec {
        n: args.n,
        latent_dim: args.latent_dim,
        d_x: args.dx,
        d_y: args.dy,
        noise: args.noise,
        clusters: args.clusters,
        spread: args.spread,
        center_spread: args.center_spread,
        sharpness: args.sharpness,
        seed: args.seed,
    };
    let dataset = generate_synthetic(&spec)?;
    save_dataset(&dataset, &args.out)?;
    println!(
        "wrote dataset to {}: n={} d_x={} d_y={} train={} validation={} test={}",
        args.out.display(),
        dataset.len(),
        dataset.x.cols,
        dataset.y.cols,
        dataset.split_indices(Split::Train).len(),
        dataset.split_indices(Split::Validation).len(),
        dataset.split_indices(Split::Test).len(),
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    if args.ks.is_empty() {
        return Err(CliError::Config("need at least one K".into()));
    }
    let (cfg, _) = resolve_train_config(&args.flags)?;
    let dataset = load_dataset_checked(&args.data, &cfg)?;
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    write_json(&cfg, &args.out.join("config.json"))?;
    let (checkpoint, log) = train(&dataset, &cfg, &args.ks)?;
    save_checkpoint(&checkpoint, &args.out.join("checkpoint"))?;
    write_train_log(&log, &args.ks, &args.out.join("train_log.csv"))?;
    let last = log.epochs.last().map_or(f64::NAN, |e| e.train_loss);
    println!(
        "trained {} epochs; final train loss {:.6}; artifacts in {}",
        checkpoint.epochs_trained,
        last,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    if args.ks.is_empty() {
        return Err(CliError::Config("need at least one K".into()));
    }
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data)?;
    let report = evaluate_split(&checkpoint, &dataset, Split::Test, &args.ks)?;
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let text = report.to_text();
    std::fs::write(args.out.join("report.txt"), &text).map_err(io_err(&args.out))?;
    write_report_rows(&report.rows(), &args.out.join("report.json"))?;
    print!("{text}");
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut experiment = load_experiment_config(&args.config)?;
    if let Some(data) = &args.data {
        experiment.dataset = Some(data.clone());
    }
    if let Some(seeds) = &args.seeds {
        experiment.seeds = seeds.clone();
    }
    if experiment.arms.is_empty() {
        return Err(CliError::Config("sweep needs at least one arm".into()));
    }
    if experiment.ks.is_empty() {
        return Err(CliError::Config("need at least one K".into()));
    }
    if experiment.seeds.is_empty() {
        experiment.seeds = vec![experiment.train.seed];
    }
    let dataset = match (&experiment.dataset, &experiment.synthetic) {
        (Some(path), _) => {
            let strictest = experiment
                .arms
                .iter()
                .find(|a| matches!(a.train.family, LossFamily::Ladder | LossFamily::LadderHc));
            match strictest {
                Some(arm) => load_dataset_checked(path, &arm.train)?,
                None => load_dataset(path)?,
            }
        }
        (None, Some(spec)) => generate_synthetic(spec)?,
        (None, None) => {
            return Err(CliError::Config(
                "sweep config needs either a dataset path or a synthetic spec".into(),
            ))
        }
    };

    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    write_json(&experiment, &args.out.join("config.json"))?;

    let ks = experiment.ks.clone();
    let cols = metric_columns(&ks);
    let mut csv = format!("arm,seed,{}\n", cols.join(","));
    for arm in &experiment.arms {
        let mut sums = vec![0.0f64; cols.len()];
        let mut counts = vec![0usize; cols.len()];
        for &seed in &experiment.seeds {
            let mut cfg = arm.train.clone();
            cfg.seed = seed;
            let (checkpoint, _) = train(&dataset, &cfg, &ks)?;
            let report = evaluate_split(&checkpoint, &dataset, Split::Test, &ks)?;
            let values = metric_values(&report, &ks);
            for (i, v) in values.iter().enumerate() {
                if let Ok(x) = v.parse::<f64>() {
                    if x.is_finite() {
                        sums[i] += x;
                        counts[i] += 1;
                    }
                }
            }
            csv.push_str(&format!("{},{},{}\n", arm.name, seed, values.join(",")));
        }
        let means: Vec<String> = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| {
                if c == 0 {
                    "nan".to_string()
                } else {
                    format!("{:.6}", s / c as f64)
                }
            })
            .collect();
        csv.push_str(&format!("{},mean,{}\n", arm.name, means.join(",")));
    }
    let csv_path = args.out.join("sweep.csv");
    std::fs::write(&csv_path, &csv).map_err(io_err(&csv_path))?;
    print!("{csv}");
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let (cfg, _) = resolve_train_config(&args.flags)?;
    let dataset = load_dataset_checked(&args.data, &cfg)?;
    let audit = finite_difference_audit(&dataset, &cfg, args.probes, args.corrupt)?;
    println!(
        "gradient audit: {} probes, max relative error {:.3e}, min hinge gap {:.3e}",
        audit.n_probes, audit.max_rel_error, audit.min_hinge_gap
    );
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(io_err(out))?;
        write_json(&audit, &out.join("gradcheck.json"))?;
    }
    if args.probes == 0 {
        println!("warning: zero probes requested; vacuous pass");
        return Ok(());
    }
    if audit.max_rel_error > args.tol {
        return Err(CliError::Runtime(format!(
            "gradient audit failed: max relative error {:.3e} exceeds tolerance {:.3e}",
            audit.max_rel_error, args.tol
        )));
    }
    Ok(())
}
