use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpip::commands;
use mpip::config::{Mode, RunConfig};
use mpip::CliError;

/// Model-predictive interaction primitives: generate, train, run, evaluate, bench.
#[derive(Debug, Parser)]
#[command(name = "mpip", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ControlFlags {
    /// Controller mode.
    #[arg(long, value_enum)]
    objective: Option<Mode>,
    /// Signal horizon in phase.
    #[arg(long = "horizon-x", value_name = "F")]
    horizon_x: Option<f64>,
    /// Control horizon in phase.
    #[arg(long = "horizon-u", value_name = "F")]
    horizon_u: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic session (dataset files + manifest.json) to a directory.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of strides; overrides `strides` in the config.
        #[arg(long)]
        strides: Option<usize>,
        /// Output directory.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Train a model from a session manifest.
    Train {
        #[command(flatten)]
        common: Common,
        /// Session manifest.
        dataset: PathBuf,
        /// Output model file.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Drive every stride of a generated session through the controller.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        control: ControlFlags,
        /// Model file.
        model: PathBuf,
        /// Session manifest with ground truth.
        dataset: PathBuf,
        /// Output directory for log.jsonl, metrics.json and config.toml.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Aggregate metrics files into a mean ± std table.
    Evaluate {
        /// metrics.json files produced by `run`.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Write the machine-readable table here.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Measure per-stage controller latency.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        control: ControlFlags,
        /// Model file; trained from the configured world when absent.
        model: Option<PathBuf>,
        /// Write the JSON report here.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn apply(cfg: &mut RunConfig, flags: &ControlFlags) {
    if let Some(o) = flags.objective {
        cfg.control.objective = o;
    }
    if let Some(h) = flags.horizon_x {
        cfg.control.horizon_x = h;
    }
    if let Some(h) = flags.horizon_u {
        cfg.control.horizon_u = h;
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { common, strides, out } => {
            let mut cfg = load(&common)?;
            if let Some(n) = strides {
                cfg.strides = n;
            }
            let manifest = commands::generate(&cfg, &out)?;
            println!("{}", manifest.display());
        }
        Command::Train { common, dataset, out } => {
            let cfg = load(&common)?;
            let model = commands::train_model(&cfg, &dataset, &out)?;
            println!(
                "{}: {} members, {} channels, {} weights",
                out.display(),
                model.ensemble_size(),
                model.channels.len(),
                model.state_dim() - 2
            );
        }
        Command::Run {
            common,
            control,
            model,
            dataset,
            out,
        } => {
            let mut cfg = load(&common)?;
            apply(&mut cfg, &control);
            let summary = commands::run(&cfg, &model, &dataset, &out)?;
            let rows = commands::aggregate(std::slice::from_ref(&summary))?;
            print!("{}", commands::format_table(&rows));
            println!(
                "invariant violations {}  fallbacks {}",
                summary.invariant_violations, summary.fallbacks
            );
        }
        Command::Evaluate { metrics, out } => {
            let (_, table) = commands::evaluate(&metrics, out.as_deref())?;
            print!("{table}");
        }
        Command::Bench {
            common,
            control,
            model,
            out,
        } => {
            let mut cfg = load(&common)?;
            apply(&mut cfg, &control);
            let report = commands::bench(&cfg, model.as_deref())?;
            if let Some(path) = out.as_deref() {
                mpip::io::write_json(Path::new(path), &report)?;
            }
            print!("{}", commands::format_bench(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MPIP_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
