//! Command-line front end: run configuration, the end-to-end pipeline,
//! JSON reports and the demo.

pub mod cli;
pub mod config;
pub mod demo;
pub mod error;
pub mod pipeline;
pub mod report;

use std::process::ExitCode;

use clap::Parser;

pub use config::{DenoiserSource, Method, RunConfig};
pub use error::{exit, CliError};
pub use pipeline::{run_inpaint, RunOutput, StageError};
pub use report::RunReport;

/// Parses `std::env::args` and runs; maps failures to exit statuses.
pub fn main_entry() -> ExitCode {
    let parsed = match cli::Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli::run(parsed) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
