//! Error classification and exit codes.
//!
//! Exit codes: 0 success, 1 I/O or unclassified, 2 usage/configuration,
//! 3 input parsing, 4 numerical failure, 5 network/oracle failure.

use std::path::Path;

use thiserror::Error;

use featnorm::dataset::DatasetError;
use featnorm::experiments::ExperimentError;
use featnorm::oracle::OracleError;

pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_NETWORK: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Network(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Network(_) => EXIT_NETWORK,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn parse_in(path: &Path, err: DatasetError) -> Self {
        CliError::Parse(format!("{}: {err}", path.display()))
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn from_experiment(err: ExperimentError) -> Self {
        match &err {
            ExperimentError::LabelMismatch
            | ExperimentError::TooFewConcepts { .. }
            | ExperimentError::FractionTooLarge { .. }
            | ExperimentError::BadFractions
            | ExperimentError::NoRepeats => CliError::Usage(err.to_string()),
            ExperimentError::Dataset(_) => CliError::Parse(err.to_string()),
            ExperimentError::Io(_) | ExperimentError::Json(_) => CliError::Io(err.to_string()),
            _ => CliError::Numeric(err.to_string()),
        }
    }

    pub fn from_oracle(err: OracleError) -> Self {
        fn classify(err: &OracleError) -> i32 {
            match err {
                OracleError::Cell { source, .. } => classify(source),
                OracleError::Config { .. }
                | OracleError::UnknownConcept { .. }
                | OracleError::UnknownFeature { .. }
                | OracleError::RatesOutOfRange
                | OracleError::EmptyQueryField => EXIT_USAGE,
                OracleError::CacheCorrupt { .. }
                | OracleError::BadOverrides(_)
                | OracleError::Dataset(_) => EXIT_PARSE,
                OracleError::CacheIo(_) => EXIT_IO,
                _ => EXIT_NETWORK,
            }
        }
        match classify(&err) {
            EXIT_USAGE => CliError::Usage(err.to_string()),
            EXIT_PARSE => CliError::Parse(err.to_string()),
            EXIT_IO => CliError::Io(err.to_string()),
            _ => CliError::Network(err.to_string()),
        }
    }
}
