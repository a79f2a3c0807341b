use std::path::PathBuf;

use thiserror::Error;

use crate::image::Image;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Line search could not satisfy the acceptance rule. Carries the last
    /// accepted iterate so callers can inspect or resume from it.
    #[error("step-size search failed after {shrinks} reductions at iteration {iteration}")]
    StepFailure {
        iteration: usize,
        shrinks: usize,
        iterate: Box<Image>,
    },

    #[error("solve failed at mu = {mu}: {source}")]
    LabelSolve {
        mu: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("could not ingest corpus: {}", format_offenders(.offenders))]
    Ingestion { offenders: Vec<(PathBuf, String)> },

    #[error("score undefined: {0}")]
    UndefinedScore(String),
}

fn format_offenders(offenders: &[(PathBuf, String)]) -> String {
    offenders
        .iter()
        .map(|(p, why)| format!("{} ({why})", p.display()))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
