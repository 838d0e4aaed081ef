use std::path::Path;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mlmc_boed::Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" | "config" => 2,
            "contract" => 3,
            "domain" => 4,
            "numerical" => 5,
            "level-cap" => 6,
            _ => 7,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        json!({"error": {"category": self.category(), "message": self.to_string()}}).to_string()
    }
}
