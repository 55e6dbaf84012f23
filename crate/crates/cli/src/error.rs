use std::process::ExitCode;

use grocer_rank::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::SizeExceedsAssortment { .. } | Error::DomainError(_) => {
                CliError::Config(e.to_string())
            }
            Error::MalformedRow { .. }
            | Error::DuplicateOrderUser { .. }
            | Error::EmptyWindow
            | Error::IdMismatch(_)
            | Error::UnknownId(_)
            | Error::ColdStartUser(_)
            | Error::EmptyOrder
            | Error::NoOrders
            | Error::UnreachableList(_)
            | Error::EmptySplit(_)
            | Error::TooFewSamples { .. }
            | Error::DegenerateVariance
            | Error::DegenerateMargin
            | Error::Io(_) => CliError::Data(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
