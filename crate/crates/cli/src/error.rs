use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Data {
        context: String,
        source: qdbc::Error,
    },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("{0}")]
    Core(#[from] qdbc::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(qdbc::Error::InvalidArgument(_) | qdbc::Error::UnknownFormat(_)) => 2,
            CliError::Verification(_) => 4,
            CliError::Core(qdbc::Error::Synthesis { .. }) => 4,
            CliError::Data { .. } | CliError::Core(_) | CliError::Output { .. } => 3,
        }
    }
}
