//! `dbird`: fit and study dynamic item-response models from the command line.

use clap::{Parser, Subcommand};

use dbird_cli::commands::{
    cmd_evaluate, cmd_fit, cmd_replicate, cmd_simulate, cmd_static_map, EvaluateArgs, FitArgs,
    ReplicateArgs, SimulateArgs, StaticMapArgs,
};

#[derive(Parser)]
#[command(name = "dbird", version, about = "Dynamic Bayesian item-response modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic cohort and write it as a dataset directory.
    Simulate(SimulateArgs),
    /// Fit a model by Gibbs sampling and write posterior summaries.
    Fit(FitArgs),
    /// Score a posterior summary against simulation truth.
    Evaluate(EvaluateArgs),
    /// Per-assessment static MAP ability estimates (no dynamics).
    StaticMap(StaticMapArgs),
    /// Run a paired replication study comparing the three model variants.
    Replicate(ReplicateArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::StaticMap(args) => cmd_static_map(args),
        Command::Replicate(args) => cmd_replicate(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
