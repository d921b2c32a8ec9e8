mod args;
mod diagnose;
mod error;
mod fit;
mod io;
mod simulate;

use std::ffi::OsString;

use clap::Parser;

use args::{expand_config, Cli, Command};
use error::{CliError, EXIT_USAGE};

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Fit(a) => fit::cmd_fit(a),
        Command::Path(a) => fit::cmd_path(a),
        Command::Simulate(a) => simulate::cmd_simulate(a),
        Command::Diagnose(a) => diagnose::cmd_diagnose(a),
    }
}

fn run(argv: Vec<OsString>) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn main() {
    std::process::exit(run(std::env::args_os().collect()));
}
