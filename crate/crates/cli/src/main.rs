//! `cerebroflow`: segmentation, graph extraction, flow simulation, dataset
//! building, surrogate training and evaluation from one binary.

mod args;
mod commands;
mod config;
mod plot;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;

/// An error caused by the user's input rather than by the tool.
#[derive(Debug)]
pub struct UserError(pub String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

/// 2 for user and configuration errors (including missing input files),
/// 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use cerebroflow_core::Error;
    use std::io::ErrorKind;
    for cause in err.chain() {
        if cause.downcast_ref::<UserError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(io) if io.kind() == ErrorKind::NotFound => 2,
                e if e.is_user_error() => 2,
                _ => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return if io.kind() == ErrorKind::NotFound {
                2
            } else {
                1
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
