use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Empty(String),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn parse(path: &Path, message: impl ToString) -> Self {
        Self::Parse { path: path.to_path_buf(), message: message.to_string() }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Parse { .. } => "parse",
            Self::Shape(_) => "shape",
            Self::Empty(_) => "empty_input",
            Self::Invalid(_) => "invalid_argument",
        }
    }

    /// 2 is shared with clap's own usage errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Io { .. } => 1,
            Self::Invalid(_) => 2,
            Self::Parse { .. } => 3,
            Self::Shape(_) => 4,
            Self::Empty(_) => 5,
        }
    }

    /// One JSON object on stderr, then the matching exit code.
    pub fn report(&self) -> ExitCode {
        let mut body = json!({ "error": self.kind(), "message": self.to_string() });
        if let Self::Io { path, .. } | Self::Parse { path, .. } = self {
            body["path"] = json!(path.display().to_string());
        }
        eprintln!("{body}");
        ExitCode::from(self.exit_code())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
