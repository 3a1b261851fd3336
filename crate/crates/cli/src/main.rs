//! `csc` — command-line surface for the denoising toolkit.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/format error,
//! 4 numerical failure (divergence or non-finite values).

mod commands;
mod spec;

use clap::Parser;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "csc",
    version,
    about = "Convolutional sparse coding denoising experiments",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let args = match spec::expand_spec_args(std::env::args().collect()) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
