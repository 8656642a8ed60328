//! Command-line front-end: `fit`, `simulate`, `bench`, `gof` and `summary`
//! subcommands over the occupancy-model engine.

mod commands;
mod config;

pub use config::RunConfig;

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation: unknown command, unknown key, unparsable value.
    Usage(String),
    /// A command started but failed.
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Run(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<occfit_core::Error> for CliError {
    fn from(e: occfit_core::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

const USAGE: &str = "\
usage: occfit <command> [--key value]...

commands:
  fit           fit the model to a visit file and write posterior outputs
  simulate      draw a synthetic dataset (and its truth) to disk
  bench         time the sampler over the standard size ladder
  gof           classify goodness-of-fit statistics from a saved fit
  summary       print posterior summaries from a saved fit

common options: --config FILE (flat key = value), --seed N, --out DIR.
Run a command with no arguments to see its recognised keys.";

/// Dispatch a full argument vector (excluding argv[0]); returns the process
/// exit code.
pub fn run(args: &[String]) -> i32 {
    let result = match args.first().map(String::as_str) {
        Some("fit") => commands::cmd_fit(&args[1..]),
        Some("simulate") => commands::cmd_simulate(&args[1..]),
        Some("bench") => commands::cmd_bench(&args[1..]),
        Some("gof") => commands::cmd_gof(&args[1..]),
        Some("summary") => commands::cmd_summary(&args[1..]),
        Some("--help") | Some("-h") | None => {
            println!("{USAGE}");
            return 0;
        }
        Some(other) => Err(CliError::Usage(format!(
            "unknown command {other:?}\n{USAGE}"
        ))),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " | "));
            2
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " | "));
            1
        }
    }
}
