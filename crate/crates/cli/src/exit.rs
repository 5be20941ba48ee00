//! Errors carrying the process exit code.

use std::fmt;

use curvecut_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Io,
    Numerical,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Io,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Numerical,
            message: message.into(),
        }
    }

    /// 1 usage, 2 I/O, 3 numerical or solver failure.
    pub fn code(&self) -> i32 {
        match self.kind {
            ErrorKind::Usage => 1,
            ErrorKind::Io => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let kind = match e {
            Error::Io(_) | Error::Image(_) => ErrorKind::Io,
            Error::Supermodular(..) | Error::Domain(_) => ErrorKind::Numerical,
            Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::OutOfBounds { .. }
            | Error::TooManyVariables(..) => ErrorKind::Usage,
        };
        CliError { kind, message }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_codes() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "x");
        assert_eq!(CliError::from(Error::Io(io)).code(), 2);
        assert_eq!(CliError::from(Error::Supermodular(0, 1, 1.0)).code(), 3);
        assert_eq!(CliError::from(Error::InvalidArgument("x".into())).code(), 1);
    }
}
