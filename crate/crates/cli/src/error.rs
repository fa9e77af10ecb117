use thiserror::Error;

/// Pipeline failures, split by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn config(m: impl Into<String>) -> Self {
        CliError::Config(m.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    /// Attach the pipeline step that failed to a library error.
    pub fn at(step: &str, e: tomokit::Error) -> Self {
        match e {
            tomokit::Error::Io(e) => CliError::Io(format!("{step}: {e}")),
            tomokit::Error::Format(m) => CliError::Io(format!("{step}: {m}")),
            other => CliError::Runtime(format!("{step}: {other}")),
        }
    }
}
