use std::path::PathBuf;

use fockforge::ErrorKind;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Resource(String),

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] fockforge::Error),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 configuration, 3 numerical failure, 4 resource refusal, 1 anything
    /// else (output I/O).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Resource(_) => 4,
            CliError::Numerical(_) => 3,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Numerical => 3,
                ErrorKind::Resource => 4,
                ErrorKind::Io => 1,
            },
            CliError::Write { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "numerical",
            4 => "resource",
            _ => "io",
        }
    }

    pub fn message(&self) -> String {
        self.to_string()
    }

    /// Single-line JSON for stderr.
    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.message(),
            }
        })
        .to_string()
    }
}
