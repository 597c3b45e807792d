//! Command-line front end for the adaptrial library.

pub mod commands;
pub mod document;

use std::fmt;
use std::process::ExitCode;

/// How a successful invocation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Futility,
}

/// Invalid input detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_FUTILITY: u8 = 4;

/// Exit code for a failed invocation: solver failures and infeasibility map
/// to 3, everything else (bad values, unreadable files) to 2.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<adaptrial::Error>() {
            return match e {
                adaptrial::Error::Domain(_) => EXIT_USAGE,
                _ => EXIT_INFEASIBLE,
            };
        }
    }
    EXIT_USAGE
}

pub fn outcome_code(outcome: Outcome) -> ExitCode {
    match outcome {
        Outcome::Success => ExitCode::SUCCESS,
        Outcome::Futility => ExitCode::from(EXIT_FUTILITY),
    }
}
