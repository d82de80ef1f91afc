use afc_core::AfcError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Schema violation; `path` is the dotted key.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A cross-field precondition that `validate` checks without running.
    #[error("invalid configuration: {0}")]
    Invalid(AfcError),

    #[error("{0}")]
    Physics(AfcError),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn config(path: &str, message: &str) -> Self {
        CliError::Config {
            path: if path.is_empty() {
                ".".into()
            } else {
                path.into()
            },
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
