//! `radar-ood`: synthetic radar data, CVAE training, detector calibration
//! and Monte-Carlo benchmarking from one declarative configuration.
//!
//! Settings resolve in order: built-in defaults, the `--config` TOML file,
//! `--set key=value` overrides, then command flags. `--print-config` shows
//! the result without running anything.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radar_ood::scores::ScoreKind;
use radar_ood::sigmodel::Label;

use crate::commands::Env;
use crate::config::{Preset, RunConfig};
use crate::error::{config as config_err, CliResult};

#[derive(Parser)]
#[command(name = "radar-ood", version, about = "Radar out-of-distribution detection toolkit")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one setting, e.g. `--set scenario.rho=0.9`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "RADAR_OOD_OUT", default_value = "out", value_name = "DIR")]
    out_root: PathBuf,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print the fully resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// More log output (repeat for trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a CIQ1 dataset of clutter (optionally with targets).
    Generate(GenerateArgs),
    /// Train a CVAE on a dataset, optionally resuming a checkpoint.
    Train(TrainArgs),
    /// Fit the null model of one score and set its threshold.
    Calibrate(CalibrateArgs),
    /// Sweep SNR and Doppler for calibrated detectors.
    Evaluate(EvaluateArgs),
    /// Rank detectors from report CSVs.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of profiles.
    #[arg(short = 'n', long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["h0", "h1"])]
    label: Option<String>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Continue from this checkpoint up to `train.epochs`.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// cvae_mse, kl, mahalanobis or anmf_fp.
    #[arg(long, value_parser = parse_kind)]
    score: ScoreKind,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Seed of the calibration set.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pfa: Option<f64>,
    #[arg(long)]
    n_cal: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Calibration file; repeat for several detectors.
    #[arg(long = "calibration")]
    calibration: Vec<PathBuf>,
    /// Report directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    /// Report CSV files.
    reports: Vec<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ScoreKind, String> {
    s.parse().map_err(|e: radar_ood::Error| e.to_string())
}

/// Command flags win over file and `--set` values.
fn apply_flags(cfg: &mut RunConfig, command: &Command) {
    match command {
        Command::Generate(a) => {
            if let Some(n) = a.count {
                cfg.generate.n = n;
            }
            if let Some(s) = a.seed {
                cfg.scenario.seed = s;
            }
            if let Some(l) = &a.label {
                cfg.generate.label = if l == "h1" { Label::H1 } else { Label::H0 };
            }
            if a.out.is_some() {
                cfg.paths.dataset.clone_from(&a.out);
            }
        }
        Command::Train(a) => {
            if a.dataset.is_some() {
                cfg.paths.dataset.clone_from(&a.dataset);
            }
            if a.out.is_some() {
                cfg.paths.checkpoint.clone_from(&a.out);
            }
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            if let Some(s) = a.seed {
                cfg.train.seed = s;
            }
        }
        Command::Calibrate(a) => {
            if a.checkpoint.is_some() {
                cfg.paths.checkpoint.clone_from(&a.checkpoint);
            }
            if let Some(s) = a.seed {
                cfg.calibrate.calibration_seed = s;
            }
            if let Some(p) = a.pfa {
                cfg.calibrate.pfa = p;
            }
            if let Some(n) = a.n_cal {
                cfg.calibrate.n_cal = n;
            }
        }
        Command::Evaluate(a) => {
            if !a.calibration.is_empty() {
                cfg.paths.calibration.clone_from(&a.calibration);
            }
            if a.out.is_some() {
                cfg.paths.report_dir.clone_from(&a.out);
            }
            if let Some(t) = a.trials {
                cfg.sweep.trials = t;
            }
            if let Some(s) = a.seed {
                cfg.sweep.seed = s;
            }
        }
        Command::Compare(a) => {
            if !a.reports.is_empty() {
                cfg.paths.reports.clone_from(&a.reports);
            }
            if a.out.is_some() {
                cfg.paths.comparison.clone_from(&a.out);
            }
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_err("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_err(format!("thread pool: {e}")))?;
    }
    let preset = match &cli.command {
        Command::Train(a) => a.preset,
        _ => None,
    };
    let mut cfg = config::load(cli.config.as_deref(), &cli.set, preset)?;
    apply_flags(&mut cfg, &cli.command);
    if cli.print_config {
        print!("{}", config::to_toml(&cfg)?);
        return Ok(());
    }
    let env = Env { out_root: cli.out_root };
    match cli.command {
        Command::Generate(_) => commands::generate(&cfg, &env),
        Command::Train(a) => commands::train_cmd(&cfg, &env, a.resume.as_deref()),
        Command::Calibrate(a) => commands::calibrate_cmd(&cfg, &env, a.score, a.out),
        Command::Evaluate(_) => commands::evaluate(&cfg, &env),
        Command::Compare(_) => commands::compare_cmd(&cfg, &env),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        "warn"
    } else {
        match cli.verbose {
            0 => "info",
            1 => "debug",
            _ => "trace",
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
