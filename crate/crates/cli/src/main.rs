//! `cppf`: scene generation, target dumps, voting, evaluation and benchmarks.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Globals;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cppf", version, about = "Point-pair voting for 9D object pose")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// exact, corrupted or file:PATH.
    #[arg(long, global = true)]
    predictor: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic scene from a JSON spec into scene.ply and scene.json.
    Gen { spec: PathBuf },
    /// Dump exact per-pair statistics of one ground-truth object.
    Targets {
        scene: Option<PathBuf>,
        #[arg(long)]
        object: Option<usize>,
    },
    /// Estimate a pose (or detect several objects) and write pose.json.
    Vote {
        scene: Option<PathBuf>,
        /// Also write the center vote grid to grid.bin.
        #[arg(long)]
        dump_grid: bool,
    },
    /// Score detections against ground truth into results.csv.
    Eval {
        detections: PathBuf,
        ground_truth: PathBuf,
        /// Comma-separated labels such as iou25,5deg_2cm.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<String>,
    },
    /// Time each pipeline stage over repeated estimates.
    Bench {
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CPPF_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError {
                kind: "usage",
                message: e.to_string().trim().to_string(),
                key: None,
            };
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::config("workers", "must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("workers", e.to_string()))?;
    }
    let globals = Globals {
        config: cli.config.as_deref().map(RunConfig::load).transpose()?,
        seed: cli.seed,
        predictor: cli.predictor,
        out: cli.out,
    };
    match cli.command {
        Command::Gen { spec } => commands::gen(&globals, &spec),
        Command::Targets { scene, object } => commands::targets(&globals, scene.as_deref(), object),
        Command::Vote { scene, dump_grid } => commands::vote(&globals, scene.as_deref(), dump_grid),
        Command::Eval {
            detections,
            ground_truth,
            criteria,
        } => commands::eval(&globals, &detections, &ground_truth, &criteria),
        Command::Bench { scene, repetitions } => commands::bench(&globals, scene.as_deref(), repetitions),
    }
}
