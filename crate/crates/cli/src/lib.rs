//! The `densekit` command-line tool.
//!
//! Every subcommand wraps one library operation and prints a JSON report (or
//! CSV with `--csv`). Errors go to stderr as JSON with exit code 1 (usage),
//! 2 (data) or 3 (translation backend / external evaluator).

pub mod args;
mod commands;
pub mod config;
pub mod error;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::io::Write;

use clap::Parser;

pub use args::Cli;
pub use config::ToolConfig;
pub use error::CliError;

/// A rendered report.
pub struct Report {
    pub json: serde_json::Value,
    pub csv: Option<String>,
}

/// Parses `argv`, runs the command and writes the report; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ToolConfig::load(path)?,
        None => ToolConfig::default(),
    };
    cfg.apply_seed(cli.seed);
    let result = commands::dispatch(&cli.command, &mut cfg);
    // A partial report (e.g. an aborted augmentation) is still written.
    let (report, err) = match result {
        Ok(r) => (Some(r), None),
        Err(commands::Failure { report, error }) => (report, Some(error)),
    };
    if let Some(report) = report {
        emit(cli, &report)?;
    }
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn emit(cli: &Cli, report: &Report) -> Result<(), CliError> {
    let text = if cli.csv {
        report
            .csv
            .clone()
            .ok_or_else(|| CliError::Usage("--csv is not available for this command".into()))?
    } else {
        serde_json::to_string_pretty(&report.json).expect("report serializes") + "\n"
    };
    match &cli.output {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Data(e.to_string()))
        }
    }
}
