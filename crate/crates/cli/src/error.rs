use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Solver(rumheat::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<rumheat::Error> for CliError {
    fn from(e: rumheat::Error) -> Self {
        match e {
            rumheat::Error::Config { field, reason } => CliError::Config { field, reason },
            other => CliError::Solver(other),
        }
    }
}

impl CliError {
    /// 1 for configuration and file-system problems, 2 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io { .. } => 1,
            CliError::Solver(_) => 2,
        }
    }
}
