use dicke_core::DickeError;
use thiserror::Error;

/// Exit code for configuration and usage problems.
pub const EXIT_USAGE: u8 = 2;
/// Exit code for runtime failures and failed audits.
pub const EXIT_FAILURE: u8 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Core(#[from] DickeError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt cache entry {key}: {reason}")]
    Cache { key: String, reason: String },

    #[error("{0} audit(s) failed; outputs were written but are not trustworthy")]
    Audit(usize),
}

impl CliError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Core(DickeError::InvalidParam { .. }) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::io("csv write", e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
