use std::process::ExitCode;

use adaptrial_cli::commands::{run, Cli};
use adaptrial_cli::{exit_code, outcome_code};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => outcome_code(outcome),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
