use std::fmt;
use std::process::ExitCode;

use trnn::TrnnError;

/// A failed command, classified by the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config files or specs: exit code 2.
    Config(String),
    /// Unreadable, malformed or incompatible data: exit code 3.
    Data(String),
    /// Divergence or a failed gradient check: exit code 4.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numerical(_) => 4,
        })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<TrnnError> for Failure {
    fn from(e: TrnnError) -> Self {
        let msg = e.to_string();
        match e {
            TrnnError::InvalidConfig(_) | TrnnError::InvalidSpec(_) => Failure::Config(msg),
            TrnnError::Divergence { .. } => Failure::Numerical(msg),
            _ => Failure::Data(msg),
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;
