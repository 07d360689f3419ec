mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use dars_core::config::RunConfig;

use args::{Cli, Command};
use error::CliError;

fn run(cli: Cli) -> Result<(), CliError> {
    let file_cfg = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let cfg = file_cfg.clone().unwrap_or_default();
    match cli.command {
        Command::Estimate(a) => commands::estimate(cfg, a),
        Command::Plan(a) => commands::plan(cfg, a),
        Command::Synthesize(a) => commands::synthesize(cfg, a),
        Command::Grade(a) => commands::grade(a),
        Command::Stats(a) => commands::stats(a),
        Command::Curves(a) => commands::curves(cfg, a),
        // export falls back to the snapshot written by `synthesize`
        Command::Export(a) => commands::export(file_cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| level.into()))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dars: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
