use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] pbvp_core::Error),
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Input = 1,
    PseudoOnly = 3,
    NonConvergence = 4,
    VerificationFailed = 5,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

impl CliError {
    pub fn exit(&self) -> Exit {
        use pbvp_core::Error as E;
        match self {
            CliError::Input(_) | CliError::Io { .. } => Exit::Input,
            CliError::Core(E::NewtonNonConvergence { .. } | E::IterationNonConvergence(_)) => Exit::NonConvergence,
            CliError::Core(E::NotSolvable { .. }) => Exit::PseudoOnly,
            CliError::Core(_) => Exit::Input,
        }
    }
}
