//! `rejectnet`: runs the experiment pipeline stage by stage.
//!
//! Exit codes: 0 on success, 2 for a bad invocation or config, and
//! `10 + i` when stage `i` (0 = train-ga ... 5 = report) fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};
use rejectnet_core::experiment::{ExperimentConfig, Pipeline, Stage, StageStatus};
use rejectnet_core::Error;

#[derive(Parser)]
#[command(
    name = "rejectnet",
    version,
    about = "Adversary rejection with a specialists+1 ensemble"
)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Rerun stages even when their artifacts are current.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    TrainGa,
    GenAdv,
    TrainBaselines,
    BuildEnsemble,
    Evaluate,
    Report,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::TrainGa => Stage::TrainGa,
            StageArg::GenAdv => Stage::GenAdv,
            StageArg::TrainBaselines => Stage::TrainBaselines,
            StageArg::BuildEnsemble => Stage::BuildEnsemble,
            StageArg::Evaluate => Stage::Evaluate,
            StageArg::Report => Stage::Report,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    DeskSynthetic,
    DeskMnist,
    FullMnist,
}

#[derive(Subcommand)]
enum Command {
    /// Train the network that generates the adversaries.
    TrainGa,
    /// Tune FGS and generate FGS, DeepFool and box-min adversaries.
    GenAdv,
    /// Train the naive network and the pure ensemble.
    TrainBaselines,
    /// Confusion matrix, class subsets and specialists+1 training.
    BuildEnsemble,
    /// Decision logs, error sweeps, densities and rejection curves.
    Evaluate,
    /// Charts, summary and manifest.
    Report,
    /// All stages in order, skipping the ones that are current.
    RunAll {
        /// Stop after this stage.
        #[arg(long, value_enum)]
        stage: Option<StageArg>,
    },
    /// Print a preset config to stdout.
    PrintConfig {
        #[arg(value_enum, default_value = "desk-synthetic")]
        preset: Preset,
        /// Directory holding the four MNIST IDX files (MNIST presets).
        #[arg(long, default_value = "data/mnist")]
        mnist_dir: PathBuf,
    },
}

fn exit_code(err: &Error) -> ExitCode {
    match err {
        Error::Stage { stage, .. } => {
            let idx = Stage::parse(stage)
                .and_then(|s| Stage::ALL.iter().position(|&x| x == s))
                .unwrap_or(0);
            ExitCode::from(10 + idx as u8)
        }
        _ => ExitCode::from(2),
    }
}

fn report(results: &[(Stage, StageStatus)]) {
    for (stage, status) in results {
        let word = match status {
            StageStatus::Ran => "ran",
            StageStatus::Skipped => "up to date",
        };
        println!("{stage}: {word}");
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let Cli {
        config,
        out,
        force,
        command,
    } = cli;
    let stage = match command {
        Command::PrintConfig { preset, mnist_dir } => {
            let cfg = match preset {
                Preset::DeskSynthetic => ExperimentConfig::desk_synthetic(),
                Preset::DeskMnist => ExperimentConfig::desk_mnist(&mnist_dir),
                Preset::FullMnist => ExperimentConfig::full_mnist(&mnist_dir),
            };
            println!("{}", cfg.to_json()?);
            return Ok(());
        }
        Command::TrainGa => Stage::TrainGa,
        Command::GenAdv => Stage::GenAdv,
        Command::TrainBaselines => Stage::TrainBaselines,
        Command::BuildEnsemble => Stage::BuildEnsemble,
        Command::Evaluate => Stage::Evaluate,
        Command::Report => Stage::Report,
        Command::RunAll { stage } => {
            let last = stage.map_or(Stage::Report, Stage::from);
            let pipeline = open(&config, out, force)?;
            report(&pipeline.run_through(last)?);
            if last == Stage::Report {
                info!("reports written to {}", pipeline.root().display());
            }
            return Ok(());
        }
    };
    let pipeline = open(&config, out, force)?;
    report(&[(stage, pipeline.run_stage(stage)?)]);
    Ok(())
}

fn open(config: &Option<PathBuf>, out: Option<PathBuf>, force: bool) -> Result<Pipeline, Error> {
    let path = config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("--config is required".into()))?;
    let cfg = ExperimentConfig::load(path)?;
    Ok(Pipeline::new(cfg, out)?.with_force(force))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            exit_code(&e)
        }
    }
}
