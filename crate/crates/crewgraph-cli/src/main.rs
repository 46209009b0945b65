//! `crewgraph`: one-shot operator surface for the bundled workflows.
//!
//! Exit codes: 0 success, 1 usage/config errors, 2 workflow errors,
//! 3 step-budget exhaustion.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "crewgraph",
    version,
    about = "Run graph-orchestrated agent workflows from a declarative config"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct RunArgs {
    /// Path to the workflow config document.
    config: PathBuf,
    /// Run identifier (defaults to a workflow-derived id).
    #[arg(long)]
    run_id: Option<String>,
    /// Write the JSONL trace here (overrides the config's paths.trace_out).
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Checkpoint directory (overrides the config's paths.checkpoints).
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Freeze the clock and derive ids deterministically so identical runs
    /// produce byte-identical artifacts.
    #[arg(long)]
    deterministic: bool,
    /// Override the step budget (overrides the config's params.step_budget).
    #[arg(long)]
    step_budget: Option<usize>,
    /// Write the final graph state (canonical JSON) here on success.
    #[arg(long)]
    state_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config document and compile its workflow graph.
    Validate {
        /// Path to the workflow config document.
        config: PathBuf,
    },
    /// Execute a workflow run from its entry node.
    Run(RunArgs),
    /// Continue a checkpointed run.
    Resume {
        #[command(flatten)]
        args: RunArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let code = match cli.command {
        Command::Validate { config } => commands::validate(&config),
        Command::Run(args) => commands::run(&args, false),
        Command::Resume { args } => {
            if args.run_id.is_none() {
                eprintln!("error: resume requires --run-id");
                return ExitCode::from(1);
            }
            commands::run(&args, true)
        }
    };
    ExitCode::from(code)
}
