use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use odp_core::cli::{run, Command};
use odp_core::config::RunConfig;

#[derive(Parser)]
#[command(name = "odp", version, about = "Origin-destination request prediction")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; may be repeated
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bucket a trip file into a workspace of OD graphs and features
    Prep(Common),
    /// Generate a synthetic trip file
    Synth(Common),
    /// Train a model and write its checkpoint
    Train(Common),
    /// Evaluate a checkpoint on a split
    Eval(Common),
    /// Predict demand and OD counts for one slot
    Predict(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // Usage errors are configuration errors (exit 1); clap would use 2,
    // which is reserved for unreadable input.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let (command, common) = match cli.command {
        Cmd::Prep(c) => (Command::Prep, c),
        Cmd::Synth(c) => (Command::Synth, c),
        Cmd::Train(c) => (Command::Train, c),
        Cmd::Eval(c) => (Command::Eval, c),
        Cmd::Predict(c) => (Command::Predict, c),
    };
    let result = RunConfig::load(common.config.as_deref(), std::env::vars(), &common.sets)
        .and_then(|cfg| run(command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
