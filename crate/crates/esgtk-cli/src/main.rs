//! `esgtk` — train, evaluate, and run the ESG taxonomy-enrichment and
//! sustainability-classification pipelines from the command line.
//!
//! One subcommand is one pipeline stage; stages compose through files, so any
//! stage can be rerun or inspected in isolation. Every run resolves its full
//! configuration (flags over `ESGTK_CONFIG` file values over defaults) before
//! touching data, and all randomness flows from an explicit seed.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/model error.

use clap::error::ErrorKind;
use clap::Parser;
use std::process::ExitCode;

mod cli;
mod commands;
mod report;

fn main() -> ExitCode {
    let parsed = match cli::Cli::try_parse() {
        Ok(parsed) => parsed,
        Err(err) => {
            let usage_ok = matches!(
                err.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            );
            let _ = err.print();
            return if usage_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match commands::run(parsed.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
