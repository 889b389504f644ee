//! File formats and subcommands of the `attrition` tool.

pub mod commands;
pub mod config;
pub mod report;
pub mod svg;
pub mod table;

use std::path::PathBuf;

use attrition_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 usage or configuration, 3 malformed input, 4 numeric or degenerate.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                Error::Usage(_) | Error::Config(_) | Error::Specification(_) => 2,
                Error::Format(_) => 3,
                Error::Domain(_) | Error::DegenerateMetric { .. } | Error::Degenerate(_) | Error::Input(_) => 4,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn read_file(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
