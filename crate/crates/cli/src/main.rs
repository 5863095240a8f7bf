//! `welfare-lcb`: lower confidence bands for optimal welfare from the
//! command line.

mod analyze;
mod args;
mod input;
mod output;
mod report;
mod simulate;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

/// Caps the rayon pool at `WELFARE_LCB_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("WELFARE_LCB_THREADS") else {
        return Ok(());
    };
    let k: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .with_context(|| format!("WELFARE_LCB_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            eprint!("ERROR: {}", msg.strip_prefix("error: ").unwrap_or(&msg));
            return ExitCode::from(2);
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Analyze(a) => analyze::run(a),
        Command::Simulate(s) => simulate::run(s),
        Command::Report(r) => report::run(r),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR: {e:#}");
            ExitCode::FAILURE
        }
    }
}
