//! `ice-impact`: feature impact metrics, importance comparisons and ICE
//! plot data from the command line.
//!
//! Exit status is 0 on success, 1 when the run fails, 2 for invalid usage or
//! configuration. Output is only written once everything has been computed.

mod args;
mod commands;
mod render;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Marks an error as the caller's fault (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn is_usage(err: &anyhow::Error) -> bool {
    use ice_impact::Error as E;
    err.chain().any(|e| {
        e.is::<UsageError>()
            || e.downcast_ref::<E>().is_some_and(|e| {
                matches!(
                    e.root(),
                    E::InvalidLambda(_)
                        | E::InvalidArgument(_)
                        | E::UnknownFeature(_)
                        | E::UnknownColumn(_)
                        | E::MissingTarget(_)
                        | E::FeatureIndex { .. }
                        | E::NotAForest
                        | E::IncompatibleScore { .. }
                )
            })
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Compute(a) => commands::compute(a),
        Command::Compare(a) => commands::compare(a),
        Command::PlotData(a) => commands::plot_data(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            if is_usage(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
        Err(_) => {
            eprintln!("error: internal failure (panic); no output written");
            ExitCode::from(1)
        }
    }
}
