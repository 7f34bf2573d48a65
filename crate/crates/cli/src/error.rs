use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use enkg_core::ErrorKind;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(enkg_core::Error),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        let code = match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Io => 3,
                ErrorKind::Numeric => 4,
            },
        };
        ExitCode::from(code)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<enkg_core::Error> for CliError {
    fn from(e: enkg_core::Error) -> Self {
        CliError::Core(e)
    }
}
