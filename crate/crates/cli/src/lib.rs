//! Command implementations for the `gradgrow` binary.
//!
//! Exit codes: 0 on success, 2 for usage or config errors, 3 for runtime
//! failures (all trials diverged, I/O errors while writing results).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gradgrow::checkpoint;
use gradgrow::harness::{
    aggregate, c1_threshold_stat, efficiency_pairs, fit_power_law, ridge_points, run_trials,
    sweep_to_file, write_runs, AggregateResult, Algorithm, ArmAggregate, ConfigFile, RowStatus,
    SweepRow, TrainConfig, TrialSeeds,
};
use gradgrow::tasks::{gen_regression, gen_spirals, RegressionTarget, SpiralSpec};
use gradgrow::Error;
use serde::Serialize;
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Final clamped control value counted as "grown" in run summaries.
pub const C1_THRESHOLD: f64 = 0.7;

#[derive(Debug, Parser)]
#[command(
    name = "gradgrow",
    version,
    about = "Train networks whose size is learned by gradient descent"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the trials of one config and write per-epoch logs.
    Train(RunArgs),
    /// Run every point of the config's [sweep] grid and write sweep.csv.
    Sweep(RunArgs),
    /// Write a generated dataset as CSV.
    GenData(GenDataArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the config's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum concurrent trials (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Override the number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Override the number of trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Continue an interrupted sweep table instead of starting over.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    BesselSimple,
    BesselComposite,
    Spiral,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Total number of rows.
    #[arg(long)]
    pub n: usize,
    /// Spiral arms; `n` must be a multiple.
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Spiral point noise standard deviation.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Spiral turns per arm.
    #[arg(long)]
    pub turns: Option<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidInput(_) | Error::Parse { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs a parsed command and returns the process exit code. Errors and
/// warnings go to stderr, the summary to stdout.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::GenData(a) => cmd_gen_data(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

struct Loaded {
    text: String,
    file: ConfigFile,
}

fn load(args: &RunArgs) -> CliResult<Loaded> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        CliError::Usage(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut file = ConfigFile::parse(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?;
    let cfg = &mut file.train;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    if let Some(grid) = &file.sweep {
        grid.validate(cfg)?;
    }
    if args.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    Ok(Loaded { text, file })
}

/// Runs `f` on a pool with at most `jobs` threads.
fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j);
    }
    let pool = b
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn write_file(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> CliResult<()>,
) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_path: String,
    /// Config file text exactly as read.
    config_text: &'a str,
    /// Effective config after command-line overrides.
    config: &'a TrainConfig,
    base_seed: u64,
    /// `[data, init, shuffle]` seeds per trial index.
    trial_seeds: Vec<[u64; 3]>,
    started_unix: u64,
    finished_unix: u64,
    files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    resumed: Option<bool>,
}

fn trial_seeds(cfg: &TrainConfig) -> Vec<[u64; 3]> {
    (0..cfg.trials)
        .map(|t| {
            let s = TrialSeeds::derive(cfg.seed, t);
            [s.data, s.init, s.shuffle]
        })
        .collect()
}

fn arm_json(a: &ArmAggregate) -> serde_json::Value {
    json!({
        "final_mean": a.final_mean,
        "final_std": a.final_std,
        "accuracy_mean": a.accuracy_mean,
        "completed": a.completed,
        "divergent": a.divergent,
        "unreliable": a.unreliable(),
    })
}

fn summary_json(
    cfg: &TrainConfig,
    agg: &AggregateResult,
    c1_fraction: Option<f64>,
) -> serde_json::Value {
    let ratio = agg.loss_ratio().map(|r| r.map_err(|e| e.to_string()));
    json!({
        "algorithm": cfg.algorithm,
        "trials": cfg.trials,
        "epochs": cfg.epochs,
        "primary": arm_json(&agg.primary),
        "static": agg.baseline.as_ref().map(arm_json),
        "R": ratio.as_ref().and_then(|r| r.as_ref().ok()),
        "R_error": ratio.as_ref().and_then(|r| r.as_ref().err()),
        "delta_L": agg.delta_l(),
        "c1_threshold": c1_fraction.map(|f| json!({ "threshold": C1_THRESHOLD, "fraction": f })),
    })
}

pub fn cmd_train(args: &RunArgs) -> CliResult<()> {
    let started = now();
    let loaded = load(args)?;
    let cfg = &loaded.file.train;
    fs::create_dir_all(&args.out)?;
    let set = with_jobs(args.jobs, || run_trials(cfg))??;
    let mut files = Vec::new();

    write_file(&args.out.join("runs.csv"), |w| {
        Ok(write_runs(w, &set.primary)?)
    })?;
    files.push("runs.csv".to_string());
    if let Some(base) = &set.baseline {
        write_file(&args.out.join("runs_static.csv"), |w| {
            Ok(write_runs(w, base)?)
        })?;
        files.push("runs_static.csv".to_string());
    }
    let model = &set.primary[0].model;
    fs::write(args.out.join("final_model.ckpt"), checkpoint::encode(model))?;
    files.push("final_model.ckpt".to_string());

    let agg = aggregate(&set);
    if let Ok(a) = &agg {
        let c1 = (cfg.algorithm == Algorithm::ControllerMask)
            .then(|| c1_threshold_stat(&set.primary, C1_THRESHOLD).fraction);
        let s = summary_json(cfg, a, c1);
        fs::write(
            args.out.join("summary.json"),
            serde_json::to_string_pretty(&s)? + "\n",
        )?;
        files.push("summary.json".to_string());
    }
    write_manifest(&args.out, "train", &loaded, args, started, files, None)?;

    match agg {
        Ok(a) => {
            let mut line = format!(
                "trials={} mean_final_test_loss={} std={}",
                cfg.trials, a.primary.final_mean, a.primary.final_std
            );
            if let Some(s) = &a.baseline {
                line += &format!(" static_mean={} static_std={}", s.final_mean, s.final_std);
            }
            if let Some(Ok(r)) = a.loss_ratio() {
                line += &format!(" R={r}");
            }
            if let Some(d) = a.delta_l() {
                line += &format!(" delta_L={d}");
            }
            println!("{line}");
            if a.unreliable() {
                eprintln!("warning: more than half of the trials of one arm diverged");
            }
            Ok(())
        }
        Err(e) => Err(CliError::Runtime(e.to_string())),
    }
}

fn write_manifest(
    out: &Path,
    command: &str,
    loaded: &Loaded,
    args: &RunArgs,
    started: u64,
    files: Vec<String>,
    resumed: Option<bool>,
) -> CliResult<()> {
    let cfg = &loaded.file.train;
    let m = Manifest {
        command,
        version: gradgrow::VERSION,
        config_path: args.config.display().to_string(),
        config_text: &loaded.text,
        config: cfg,
        base_seed: cfg.seed,
        trial_seeds: trial_seeds(cfg),
        started_unix: started,
        finished_unix: now(),
        files,
        resumed,
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&m)? + "\n",
    )?;
    Ok(())
}

fn analysis_json(rows: &[SweepRow]) -> (serde_json::Value, Vec<String>) {
    let (ridge, mut warnings) = ridge_points(rows);
    let fit = match fit_power_law(&ridge) {
        Ok(f) => json!({ "c": f.c, "p": f.p, "residual": f.residual, "used": f.used }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let (pairs, pair_warnings) = efficiency_pairs(rows);
    if rows.iter().any(|r| r.a_g.is_some()) {
        warnings.extend(pair_warnings);
    }
    let value = json!({
        "ridge": ridge.iter().map(|p| json!({ "lambda": p.lambda, "e_star": p.e_star })).collect::<Vec<_>>(),
        "power_law": fit,
        "efficiency": pairs.iter().map(|p| json!({
            "classes": p.classes,
            "n": p.n,
            "A_g": p.a_g,
            "A_s_same": p.a_s_same,
            "A_s_double": p.a_s_double,
        })).collect::<Vec<_>>(),
        "warnings": warnings,
    });
    (value, warnings)
}

pub fn cmd_sweep(args: &RunArgs) -> CliResult<()> {
    let started = now();
    let loaded = load(args)?;
    let cfg = &loaded.file.train;
    let grid = loaded.file.sweep.clone().ok_or_else(|| {
        CliError::Usage(format!("{} has no [sweep] table", args.config.display()))
    })?;
    fs::create_dir_all(&args.out)?;
    let table = args.out.join("sweep.csv");
    let resumed = args.resume && table.exists();
    let rows = with_jobs(args.jobs, || sweep_to_file(cfg, &grid, &table, args.resume))?
        .map_err(|e| match e {
            Error::Parse { line, msg } => CliError::Usage(format!(
                "cannot resume from {}: line {line}: {msg}; remove it (or run without --resume) to start fresh",
                table.display()
            )),
            other => other.into(),
        })?;
    let (analysis, warnings) = analysis_json(&rows);
    fs::write(
        args.out.join("analysis.json"),
        serde_json::to_string_pretty(&analysis)? + "\n",
    )?;
    write_manifest(
        &args.out,
        "sweep",
        &loaded,
        args,
        started,
        vec!["sweep.csv".into(), "analysis.json".into()],
        Some(resumed),
    )?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let failed = rows
        .iter()
        .filter(|r| r.status == RowStatus::Failed)
        .count();
    println!(
        "cells={} failed={failed} table={}",
        rows.len(),
        table.display()
    );
    Ok(())
}

pub fn cmd_gen_data(args: &GenDataArgs) -> CliResult<()> {
    let data = match args.task {
        TaskArg::BesselSimple | TaskArg::BesselComposite => {
            if args.noise.is_some() || args.turns.is_some() {
                return Err(CliError::Usage(
                    "--noise and --turns apply to spirals only".into(),
                ));
            }
            let target = if args.task == TaskArg::BesselSimple {
                RegressionTarget::BesselSimple
            } else {
                RegressionTarget::BesselComposite
            };
            gen_regression(args.n, target, args.seed)?
        }
        TaskArg::Spiral => {
            if args.classes == 0 || !args.n.is_multiple_of(args.classes) {
                return Err(CliError::Usage(format!(
                    "--n {} must be a positive multiple of --classes {}",
                    args.n, args.classes
                )));
            }
            let mut spec = SpiralSpec::new(args.classes, args.n / args.classes);
            if let Some(s) = args.noise {
                spec.noise_std = s;
            }
            if let Some(t) = args.turns {
                spec.turns = t;
            }
            gen_spirals(&spec, args.seed)?
        }
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_file(&args.out, |w| Ok(data.write_csv(w)?))?;
    println!("rows={} out={}", data.len(), args.out.display());
    Ok(())
}
