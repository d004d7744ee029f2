use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<pndr_core::Error> for CliError {
    fn from(e: pndr_core::Error) -> Self {
        use pndr_core::Error as E;
        match e {
            E::InvalidParameter(m) => CliError::config("parameter", m),
            E::Io { .. }
            | E::Json { .. }
            | E::MissingFiles(_)
            | E::BadMagic { .. }
            | E::Truncated { .. }
            | E::Unsupported { .. }
            | E::Png(_)
            | E::Parse { .. }
            | E::NonTriangularFace { .. } => CliError::Io(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<pndr_net::Error> for CliError {
    fn from(e: pndr_net::Error) -> Self {
        use pndr_net::Error as E;
        match e {
            E::Core(c) => c.into(),
            E::Checkpoint { .. } => CliError::Io(e.to_string()),
            E::Divergence { .. } => CliError::Numeric(e.to_string()),
            E::BadResolution { .. } => CliError::config("resolution", e.to_string()),
            E::InvalidConfig(m) => CliError::config("config", m),
            _ => CliError::config("input", e.to_string()),
        }
    }
}
