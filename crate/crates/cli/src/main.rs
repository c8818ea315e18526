use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

/// Predicate-level fault localization: clean coincidentally correct runs,
/// weight predicates by module fault-proneness, rank them with an elastic
/// net, and score the ranking.
#[derive(Parser, Debug)]
#[command(name = "faultloc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract per-function code metrics from C-like sources.
    Metrics {
        #[arg(required = true)]
        sources: Vec<PathBuf>,
        /// directory for metrics.csv; prints to stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train (or load) a fault-proneness model and derive penalty factors.
    FaultProneness(commands::FaultPronenessArgs),
    /// Relabel coincidentally correct passing runs.
    Clean(commands::CleanArgs),
    /// Fit the elastic net and rank predicates.
    Localize(commands::LocalizeArgs),
    /// Score a fit against known faults.
    Evaluate(commands::EvaluateArgs),
    /// Generate a synthetic instance or run an experiment over many.
    Synth(commands::SynthArgs),
    /// Run every stage from one JSON config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// overrides the cleaning and fold seeds
        #[arg(long)]
        seed: Option<u64>,
        /// overrides the output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Metrics { sources, out } => commands::metrics(&sources, out.as_deref()),
        Command::FaultProneness(args) => commands::fault_proneness(&args),
        Command::Clean(args) => commands::clean(&args),
        Command::Localize(args) => commands::localize(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Synth(args) => commands::synth(&args),
        Command::Pipeline { config, seed, out } => commands::pipeline(&config, seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
