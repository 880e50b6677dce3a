//! `fooling`: train digit classifiers, evolve or optimize images that fool
//! them, and analyze the results. Every run writes into its own directory
//! with a `manifest.json` recording the resolved configuration and input
//! hashes.

mod commands;
mod error;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{ablate, ascend, cross_test, evolve, report, retrain, stats, train};
use run::Common;

/// Config-file tables, one per subcommand.
pub const SUBCOMMANDS: [&str; 8] =
    ["train", "evolve", "ascend", "retrain-loop", "cross-test", "ablate", "stats", "report"];

#[derive(Parser, Debug)]
#[command(name = "fooling", version, about = "Fooling-image workbench for small digit classifiers")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a LeNet-style classifier on MNIST
    Train(train::TrainArgs),
    /// Evolve one fooling image per class with MAP-Elites
    Evolve(evolve::EvolveArgs),
    /// Optimize images by gradient ascent on a class probability
    Ascend(ascend::AscendArgs),
    /// Alternate retraining with a fooling class and re-attacking
    RetrainLoop(retrain::RetrainArgs),
    /// Show each of two models the images evolved on the other
    CrossTest(cross_test::CrossTestArgs),
    /// Measure confidence drops when image regions are blanked
    Ablate(ablate::AblateArgs),
    /// Median confidence of correct and misclassified validation images
    Stats(stats::StatsArgs),
    /// Heatmap and champion grid over one or more archives
    Report(report::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = match run::resolve::<serde::de::IgnoredAny>(&cli.common, "") {
        Ok((r, _)) => r.workers,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let outcome = fooling::par::with_workers(workers, || match &cli.command {
        Command::Train(a) => train::run(&cli.common, a),
        Command::Evolve(a) => evolve::run(&cli.common, a),
        Command::Ascend(a) => ascend::run(&cli.common, a),
        Command::RetrainLoop(a) => retrain::run(&cli.common, a),
        Command::CrossTest(a) => cross_test::run(&cli.common, a),
        Command::Ablate(a) => ablate::run(&cli.common, a),
        Command::Stats(a) => stats::run(&cli.common, a),
        Command::Report(a) => report::run(&cli.common, a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
