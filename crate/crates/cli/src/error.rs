use serde_json::json;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Parse,
    Validation,
    Numerical,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Parse,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Io => 1,
            ErrorKind::Parse => 2,
            ErrorKind::Validation => 3,
            ErrorKind::Numerical => 4,
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Io => "io",
            ErrorKind::Parse => "parse",
            ErrorKind::Validation => "validation",
            ErrorKind::Numerical => "numerical",
        };
        json!({ "error": kind, "message": self.message, "exit_code": self.exit_code() }).to_string()
    }
}

impl From<skspin::Error> for CliError {
    fn from(e: skspin::Error) -> Self {
        use skspin::Error as E;
        let kind = match e {
            E::QuadratureNotConverged { .. } | E::ZeroOverlap { .. } => ErrorKind::Numerical,
            E::Snapshot(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}
