use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("replay mismatch: {0}")]
    Replay(String),
    #[error(transparent)]
    Core(#[from] celldet_core::Error),
    #[error(transparent)]
    Bench(#[from] celldet_bench::BenchError),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: Option<u64>, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config(_) => "config",
            CliError::MissingInput(_) => "missing_input",
            CliError::Replay(_) => "replay_mismatch",
            CliError::Core(_) => "pipeline",
            CliError::Bench(celldet_bench::BenchError::Training { .. }) => "training",
            CliError::Bench(_) => "config",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind() {
            "config" | "missing_input" => 2,
            "replay_mismatch" => 3,
            _ => 1,
        }
    }

    pub fn report(&self) -> ErrorReport {
        let (path, line) = match self {
            CliError::Io { path, .. } => (Some(path.display().to_string()), None),
            CliError::Parse { path, line, .. } => (Some(path.display().to_string()), *line),
            _ => (None, None),
        };
        ErrorReport {
            error: ErrorBody {
                kind: self.kind(),
                message: self.to_string(),
                path,
                line,
            },
        }
    }
}

/// Machine-readable error printed to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub error: ErrorBody,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}
