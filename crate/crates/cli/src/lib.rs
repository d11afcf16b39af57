//! Library side of the `vtm` command-line tool.

pub mod app;
pub mod commands;
pub mod config;
pub mod synth;

use thiserror::Error;
use vtm::VtmError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Vtm(#[from] VtmError),
    #[error("{0}")]
    Usage(String),
    #[error("gradient check failed: {0}")]
    Gradcheck(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Vtm(VtmError::Io(e))
    }
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Vtm(e) => e.code(),
            CliError::Usage(_) => "E_USAGE",
            CliError::Gradcheck(_) => "E_GRADCHECK",
        }
    }

    /// `CODE: message` on a single line.
    pub fn report(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("{}: {}", self.code(), msg.trim())
    }
}
