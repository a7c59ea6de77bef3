use std::path::PathBuf;
use std::process::ExitCode;

use cervifuse::pipeline::{run_all, Run, Stage};
use cervifuse::{synth, CliResult, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cervifuse", version, about = "Frozen-trunk feature fusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest the dataset and assign train/val/test per class.
    Split(RunArgs),
    /// Write augmented copies of the training images.
    Augment(RunArgs),
    /// Run every trunk over every split.
    Extract(RunArgs),
    /// Train one head per trunk and store standardized head features.
    TrainHead(RunArgs),
    /// Train the classifier on concatenated head features.
    TrainFusion(RunArgs),
    /// Per-head test predictions and their majority vote.
    PredictLf(RunArgs),
    /// Confusion matrices and metrics for every run.
    Eval(RunArgs),
    /// Comparison table and charts.
    Report(RunArgs),
    /// All stages in order.
    Run(RunArgs),
    /// Generate a synthetic dataset, one directory per class.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        n_per_class: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(args: &RunArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn stage(args: &RunArgs, stage: Stage) -> CliResult<()> {
    let run = Run::open(load(args)?)?;
    if stage == Stage::Report {
        print!("{}", run.report()?);
        Ok(())
    } else {
        run.execute(stage)
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Split(a) => stage(&a, Stage::Split),
        Command::Augment(a) => stage(&a, Stage::Augment),
        Command::Extract(a) => stage(&a, Stage::Extract),
        Command::TrainHead(a) => stage(&a, Stage::TrainHead),
        Command::TrainFusion(a) => stage(&a, Stage::TrainFusion),
        Command::PredictLf(a) => stage(&a, Stage::PredictLf),
        Command::Eval(a) => stage(&a, Stage::Eval),
        Command::Report(a) => stage(&a, Stage::Report),
        Command::Run(a) => {
            let run = run_all(load(&a)?)?;
            print!("{}", std::fs::read_to_string(run.dir.join("reports/comparison.txt")).unwrap_or_default());
            Ok(())
        }
        Command::Synth {
            out,
            n_per_class,
            classes,
            seed,
        } => {
            let files = synth::generate(&out, n_per_class, classes, seed)?;
            log::info!("wrote {} images under {}", files.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
