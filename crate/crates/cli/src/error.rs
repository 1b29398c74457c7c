use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Numeric(String),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<lasso_hmm::Error> for CliError {
    fn from(e: lasso_hmm::Error) -> Self {
        use lasso_hmm::Error as E;
        match e {
            E::Io(_) => CliError::Io(e.to_string()),
            E::Csv(ref inner) if inner.is_io_error() => CliError::Io(e.to_string()),
            E::NonFiniteObjective | E::NoConvergedPoint | E::NoUnpenalizedPoint => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
