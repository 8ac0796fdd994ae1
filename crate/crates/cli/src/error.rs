//! Process-level error classification.

use std::fmt;

use chipdry::CoreError;

/// Anything that ends a command, mapped onto the process exit codes:
/// configuration and artifact problems exit 2, numerical failures exit 3,
/// an unreachable terminal moisture bound exits 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(CoreError),
}

impl CliError {
    pub fn config(message: String) -> Self {
        CliError::Config(message)
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(CoreError::Infeasible { .. }) => 4,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(message) => write!(f, "{message}"),
            CliError::Numerical(err) => write!(f, "{err}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        CliError::Numerical(err)
    }
}
