use std::io;

use thiserror::Error;
use trine_qkd::net::NetError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] trine_qkd::Error),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Net(#[from] NetError),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Short category name shown with the message.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(trine_qkd::Error::Domain(_)) => "domain",
            CliError::Core(trine_qkd::Error::Precondition(_)) => "precondition",
            CliError::Core(trine_qkd::Error::Format(_)) | CliError::Csv(_) | CliError::Json(_) => "format",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Net(_) => "network",
        }
    }

    /// Process exit status; 2 matches clap's usage errors.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" => 2,
            "domain" => 3,
            "precondition" => 4,
            "format" => 5,
            "config" => 6,
            "io" => 7,
            _ => 8,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
