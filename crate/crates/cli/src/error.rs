use simdps_core::Error;

use crate::pipeline::StageError;

/// Process exit statuses.
pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const EXTERNAL: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] StageError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Data(e) if e.is_external() => exit::EXTERNAL,
            CliError::Data(_) => exit::DATA,
        }
    }

    pub fn at(stage: &'static str, source: Error) -> Self {
        CliError::Data(StageError { stage, source })
    }
}

impl From<Error> for StageError {
    fn from(source: Error) -> Self {
        StageError { stage: "io", source }
    }
}
