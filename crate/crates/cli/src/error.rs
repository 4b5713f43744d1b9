use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// TOML syntax or schema error; the message carries line and column.
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config at `{at}`: {reason}")]
    Invalid { at: String, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn invalid(at: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Invalid {
            at: at.into(),
            reason: reason.into(),
        }
    }

    /// 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Invalid { .. } => 2,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
