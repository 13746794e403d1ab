use std::path::PathBuf;

use thiserror::Error;

/// Failures of a batch run, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("config does not match the schema: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] vh_core::Error),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("cannot write table {path}: {source}")]
    Table { path: PathBuf, source: csv::Error },
}

impl CliError {
    /// 2 for anything the user can fix in the config or arguments, 3 for
    /// numerical-integrity failures.
    pub fn exit_code(&self) -> i32 {
        use vh_core::Error as E;
        match self {
            Self::Core(E::NumericalIntegrity(_) | E::Singularity(_) | E::Construction(_)) => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
