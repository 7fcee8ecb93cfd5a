//! Command-line front end: argument parsing, the saved-model format and
//! one function per subcommand.

pub mod args;
mod commands;
pub mod model;

use std::ffi::OsString;

use anyhow::Result;
use clap::Parser;

pub use args::{Cli, Command};

/// Parses `argv` after expanding `--config`. Help and usage errors come
/// back as `clap::Error` so the caller can print them the clap way.
pub fn parse(argv: Vec<OsString>) -> Result<Result<Cli, clap::Error>> {
    let argv = args::expand_config(argv)?;
    Ok(Cli::try_parse_from(argv))
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        anyhow::ensure!(threads >= 1, "--threads must be at least 1");
        set_threads(threads)?;
    }
    match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Cv(a) => commands::cv(a),
        Command::Predict(a) => commands::predict_cmd(a),
        Command::Eigen(a) => commands::eigen(a),
        Command::Window(a) => commands::window(a),
        Command::KktCheck(a) => commands::kkt(a),
    }
}

#[cfg(feature = "parallel")]
fn set_threads(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow::anyhow!("configuring the worker pool: {e}"))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_threads: usize) -> Result<()> {
    Ok(())
}

/// The error chain on one line, skipping links whose text the previous
/// link already contains.
pub fn render_error(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|p| p.ends_with(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ")
}
