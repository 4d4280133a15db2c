use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    /// Solver failures; per-point failures of a sweep are reported in the
    /// output rows and end up here only as a count.
    #[error("solver failure: {0}")]
    Solver(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(path: &str, msg: &str) -> Self {
        CliError::Config(format!("{path}: {msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<oneatom::Error> for CliError {
    fn from(e: oneatom::Error) -> Self {
        match e {
            oneatom::Error::InvalidParameter { .. } | oneatom::Error::InvalidTruncation(_) | oneatom::Error::Domain(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Solver(other.to_string()),
        }
    }
}
