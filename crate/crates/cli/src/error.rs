use std::path::{Path, PathBuf};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const SCHEMA: i32 = 2;
    pub const ZERO_STATE: i32 = 3;
    pub const POSITIVITY: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("config {path}: {source}")]
    Model { path: PathBuf, source: catfield::Error },
    #[error("self-audit of {path} failed: {message}")]
    Audit { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn schema(path: &Path, message: impl Into<String>) -> Self {
        Self::Schema { path: path.to_path_buf(), message: message.into() }
    }

    pub fn model(path: &Path, source: catfield::Error) -> Self {
        Self::Model { path: path.to_path_buf(), source }
    }

    pub fn audit(path: &Path, message: impl Into<String>) -> Self {
        Self::Audit { path: path.to_path_buf(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        use catfield::Error as E;
        match self {
            CliError::Io { .. } => exit::IO,
            CliError::Schema { .. } => exit::SCHEMA,
            CliError::Audit { .. } => exit::POSITIVITY,
            CliError::Model { source, .. } => match source {
                E::ZeroState { .. } | E::DegeneratePreparation(_) => exit::ZERO_STATE,
                E::PositivityViolation { .. } | E::TraceViolation { .. } | E::ContractViolation(_) => exit::POSITIVITY,
                E::InvalidArgument(_) | E::Truncation { .. } | E::Capacity { .. } | E::UnsupportedInput(_) => {
                    exit::SCHEMA
                }
            },
        }
    }
}
