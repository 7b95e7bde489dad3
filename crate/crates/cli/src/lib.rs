//! Library side of the `osadas` command: configuration, artifact and report
//! I/O, and the subcommand implementations.

pub mod args;
pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

use std::io::Write;

pub use error::{CliError, CliResult, FailureKind};

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: args::Cli) -> i32 {
    let result = match &cli.command {
        args::Command::Explain(a) => commands::explain(a).map(|paths| {
            for p in paths {
                println!("{}", p.raw.display());
            }
        }),
        args::Command::Evaluate(a) => commands::evaluate(a).map(|bytes| {
            if a.output.is_none() {
                let _ = std::io::stdout().write_all(&bytes);
            }
        }),
        args::Command::Compare(a) => commands::compare(a).map(|c| print!("{}", c.to_text())),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
