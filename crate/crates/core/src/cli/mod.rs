//! Command-line front end: TOML-style configs, CSV ingestion, reports.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | invalid configuration, scenario, level, or missing column (clap usage errors also exit 2) |
//! | 3 | file not found / I/O failure |
//! | 4 | malformed config or CSV (row/column reported) |
//! | 5 | estimation failed (rank deficiency, non-identifiability, …) |
//! | 6 | simulation finished but an estimator failed in more than 1% of replications |

mod commands;
mod config;
mod csvio;
mod report;

pub use commands::{cmd_analyze, cmd_simulate, cmd_version, run, Cli, Command};
pub use config::{AnalysisConfig, MethodChoice, OutputFormat, ScenarioPreset, SimulationConfig};
pub use csvio::{
    load_main_study, load_validation_study, read_table, write_main_csv, write_validation_csv, Table,
};
pub use report::{AnalysisReport, CoefficientRow, MethodReport, SimulationReport, REPORT_SCHEMA};

use std::path::PathBuf;

use thiserror::Error;

use crate::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("file not found: {}", path.display())]
    FileNotFound { path: PathBuf },

    #[error("I/O error on {}: {message}", path.display())]
    Io { path: PathBuf, message: String },

    #[error("{}{}{}: {message}", path.display(), row.map(|r| format!(", row {r}")).unwrap_or_default(), column.as_ref().map(|c| format!(", column `{c}`")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        /// 1-based line number in the file.
        row: Option<usize>,
        column: Option<String>,
        message: String,
    },

    #[error("{}: missing {role} column `{name}`", path.display())]
    MissingColumn {
        path: PathBuf,
        role: String,
        name: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Library(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::FileNotFound { .. } | CliError::Io { .. } => 3,
            CliError::Parse { .. } => 4,
            CliError::MissingColumn { .. } | CliError::Config(_) => 2,
            CliError::Library(e) => match e {
                Error::InvalidSpec { .. } | Error::InvalidLevel(_) => 2,
                Error::TooManyFailures { .. } => 6,
                _ => 5,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        let path = path.into();
        if err.kind() == std::io::ErrorKind::NotFound {
            CliError::FileNotFound { path }
        } else {
            CliError::Io {
                path,
                message: err.to_string(),
            }
        }
    }
}
