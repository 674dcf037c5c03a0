//! Pipeline driver. Exit codes: 0 success, 1 partial (skips occurred),
//! 2 configuration or hard failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use newscast_cli::{
    run_build_dataset, run_build_prompts, run_cluster, run_evaluate, run_ingest, run_report,
    PipelineOutcome, RunConfig,
};

#[derive(Parser)]
#[command(name = "newscast", version, about = "News-dissemination-aware weekly stock movement pipeline")]
struct Cli {
    /// Path to the run configuration TOML.
    #[arg(long, global = true, default_value = "newscast.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch and cache news, bars, and fundamentals for every (ticker, week).
    Ingest,
    /// Cluster each week's news and export per-week diagnostics CSV.
    Cluster,
    /// Render ground-truth-stripped prompts for every week.
    BuildPrompts,
    /// Teacher-generate the instruction-tuning dataset JSONL.
    BuildDataset,
    /// Score a predictions file against the dataset (accuracy, ROUGE, terms).
    Evaluate {
        /// JSONL of {ticker, window_start, text} prediction records.
        #[arg(long)]
        predictions: PathBuf,
        /// Dataset JSONL to score against; defaults to <output_dir>/dataset.jsonl.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Case-classify HG vs HG-NC predictions against weekly clustering ratios.
    Report {
        /// HG predictions JSONL.
        #[arg(long)]
        hg: PathBuf,
        /// HG-NC predictions JSONL.
        #[arg(long)]
        hgnc: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match RunConfig::load(&cli.config) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Ingest => run_ingest(&config),
        Command::Cluster => run_cluster(&config),
        Command::BuildPrompts => run_build_prompts(&config),
        Command::BuildDataset => run_build_dataset(&config),
        Command::Evaluate {
            predictions,
            dataset,
        } => run_evaluate(&config, predictions, dataset.as_deref()).map(|(outcome, _)| outcome),
        Command::Report { hg, hgnc } => run_report(&config, hg, hgnc),
    };
    match result {
        Ok(outcome) => {
            print_outcome(&outcome);
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn print_outcome(outcome: &PipelineOutcome) {
    for line in &outcome.summary {
        println!("{line}");
    }
    for skip in &outcome.skips {
        eprintln!("skipped: {skip}");
    }
}
