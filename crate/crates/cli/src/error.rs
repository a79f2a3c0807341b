use std::fmt;
use std::path::Path;

use tvmap::Error;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const NUMERICAL: u8 = 4;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: DATA,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Argument(_) => USAGE,
        Error::Format { .. }
        | Error::Domain(_)
        | Error::Io { .. }
        | Error::ShapeMismatch { .. }
        | Error::Ingestion { .. } => DATA,
        Error::StepFailure { .. } | Error::LabelSolve { .. } | Error::UndefinedScore(_) => {
            NUMERICAL
        }
    }
}

/// Wraps a library error with the name of the pipeline stage that raised it.
pub fn stage(name: &'static str) -> impl Fn(Error) -> CliError {
    move |err| CliError {
        code: exit_code(&err),
        message: format!("{name}: {err}"),
    }
}

pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "input file not found: {}",
            path.display()
        )))
    }
}

pub type CliResult<T> = Result<T, CliError>;
