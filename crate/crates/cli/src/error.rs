use std::path::{Path, PathBuf};

use robkit_core::Error as CoreError;
use robkit_llm::LlmError;
use serde_json::json;

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_MISSING_INPUT: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing input: {} ({what})", path.display())]
    MissingInput { path: PathBuf, what: String },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn missing(path: &Path, what: &str) -> Self {
        CliError::MissingInput {
            path: path.to_path_buf(),
            what: what.to_string(),
        }
    }

    pub fn from_io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::missing(path, "not found")
        } else {
            CliError::Internal(format!("{}: {e}", path.display()))
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingInput { .. } => EXIT_MISSING_INPUT,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MissingInput { .. } => "missing_input",
            CliError::Validation(_) => "validation",
            CliError::Internal(_) => "internal",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::MissingInput { path, .. } = self {
            v["path"] = json!(path.display().to_string());
        }
        v
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io { path, source } => CliError::from_io(&path, source),
            CoreError::Divergence(_) => CliError::Internal(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Io { path, source } => CliError::from_io(&path, source),
            LlmError::Core(c) => c.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}
