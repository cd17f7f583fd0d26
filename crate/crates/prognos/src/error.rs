use std::fmt;
use std::path::Path;

use prognos_core::Error as CoreError;

/// Exit-code class of a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind.name(), self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Usage, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Data, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Numerical, message: message.into() }
    }

    /// Prefixes the message with a file path.
    pub fn at(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    /// One-line machine-readable record for stderr.
    pub fn json_record(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind.name(),
                "exit_code": self.kind.exit_code(),
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::InvalidParameter(_) => ErrorKind::Usage,
            CoreError::EmptyDataset
            | CoreError::Dimension(_)
            | CoreError::InvalidGrid(_)
            | CoreError::TruncationTooShort { .. }
            | CoreError::MissingTtf(_)
            | CoreError::NonPositiveTtf { .. }
            | CoreError::ZeroVariance
            | CoreError::CurveTooShort { .. }
            | CoreError::TooFewSamples(_)
            | CoreError::NoSurvivors(_) => ErrorKind::Data,
            CoreError::NonFinite(_)
            | CoreError::NoVariance
            | CoreError::DegenerateResponse(_)
            | CoreError::EmptySelection
            | CoreError::Numerical(_) => ErrorKind::Numerical,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::data(e.to_string())
    }
}
