use std::path::PathBuf;

use serde::Serialize;

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// A checked property failed.
    Violation,
    /// The check could not decide.
    Inconclusive,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Violation => 3,
            Outcome::Inconclusive => 4,
        }
    }

    /// Violation beats inconclusive beats success.
    pub fn combine(self, other: Outcome) -> Outcome {
        use Outcome::*;
        match (self, other) {
            (Violation, _) | (_, Violation) => Violation,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Success,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] l2d_core::error::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    error: &'a str,
    message: String,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// Configuration and validation problems exit with 2; IO failures with 1.
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            _ => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        use l2d_core::error::Error as E;
        match self {
            CliError::Config(_) | CliError::Json(_) => "config",
            CliError::Core(E::InvalidConfig(_)) => "config",
            CliError::Core(E::InvalidInput(_)) => "input",
            CliError::Core(E::InvalidParameter(_)) => "parameter",
            CliError::Core(E::Diverged { .. }) => "diverged",
            CliError::Io { .. } | CliError::Csv(_) => "io",
        }
    }

    /// One-line JSON diagnostic for standard error.
    pub fn diagnostic(&self) -> String {
        serde_json::to_string(&Diagnostic { error: self.kind(), message: self.to_string() }).expect("diagnostic serializes")
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
