use std::fmt;

use rgorbit::RgError;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed configuration, or bad flag values.
    Config(String),
    Usage(String),
    Solver(RgError),
    Io(std::io::Error),
    /// Every point of a sweep failed.
    AllPointsFailed(usize),
}

impl From<RgError> for CliError {
    fn from(e: RgError) -> Self {
        CliError::Solver(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl CliError {
    pub fn name(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Usage(_) => "UsageError",
            CliError::Solver(e) => e.name(),
            CliError::Io(_) => "IoError",
            CliError::AllPointsFailed(_) => "AllPointsFailed",
        }
    }

    /// 2 for bad input, 3 for numerical failure, 1 for the filesystem.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Solver(e) if e.is_validation() => 2,
            CliError::Solver(_) | CliError::AllPointsFailed(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    pub fn to_json(&self) -> String {
        json!({
            "error": self.name(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Usage(m) => f.write_str(m),
            CliError::Solver(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::AllPointsFailed(n) => write!(f, "all {n} grid points failed"),
        }
    }
}

impl std::error::Error for CliError {}
