use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Variants are grouped by the subsystem that raises them; every message is a
/// single line so the CLI can forward it verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid UTF-8 at byte offset {offset}")]
    Decode { offset: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at epoch {epoch}, step {step}: non-finite loss")]
    Diverged { epoch: usize, step: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("linearly dependent directions: direction {index} lies in the span of the previous ones")]
    DependentDirections { index: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("invalid city record at line {line}: {reason}")]
    CityRecord { line: usize, reason: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Short machine-readable category, used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Decode { .. } => "decode",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::Dimension(_) => "dimension",
            Error::Contract(_) => "contract",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Diverged { .. } => "diverged",
            Error::Singular(_) => "singular",
            Error::DependentDirections { .. } => "dependent_directions",
            Error::Format(_) => "format",
            Error::CityRecord { .. } => "city_record",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
