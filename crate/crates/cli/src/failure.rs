//! Failures and their exit codes: 2 for violated preconditions, 3 for
//! numerical or I/O failures.

use std::fmt;
use std::path::PathBuf;

use serde_json::{json, Value};

use gnslab::LabError;

#[derive(Debug)]
pub enum Failure {
    /// A precondition failed; `field` names the config entry when known.
    Validation { field: Option<String>, message: String },
    Numerical(String),
    Io { path: PathBuf, message: String },
}

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

/// The message of a core error without its category prefix.
pub fn lab_message(e: &LabError) -> String {
    match e {
        LabError::InvalidArgument(m)
        | LabError::Structural(m)
        | LabError::Numerical(m)
        | LabError::Domain(m)
        | LabError::Parse(m) => m.clone(),
        LabError::Io { path, source } => format!("{}: {source}", path.display()),
    }
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self::Validation {
            field: None,
            message: message.into(),
        }
    }

    pub fn field(field: &str, message: impl Into<String>) -> Self {
        Self::Validation {
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self::Numerical(message.into())
    }

    pub fn io(path: impl Into<PathBuf>, e: &std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            message: e.to_string(),
        }
    }

    /// Prefixes the message with where it happened.
    pub fn context(self, what: &str) -> Self {
        match self {
            Failure::Validation { field, message } => Failure::Validation {
                field,
                message: format!("{what}: {message}"),
            },
            Failure::Numerical(m) => Failure::Numerical(format!("{what}: {m}")),
            io => io,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation { message, .. } | Failure::Io { message, .. } => message,
            Failure::Numerical(m) => m,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Validation { .. } => "validation",
            Failure::Numerical(_) => "numerical",
            Failure::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation { .. } => EXIT_VALIDATION,
            _ => EXIT_FAILURE,
        }
    }

    /// One-line JSON error report.
    pub fn report(&self) -> Value {
        let mut v = json!({
            "status": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.message(),
        });
        match self {
            Failure::Validation { field: Some(f), .. } => v["field"] = json!(f),
            Failure::Io { path, .. } => v["path"] = json!(path.display().to_string()),
            _ => {}
        }
        v
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation { field: Some(field), message } => write!(f, "{field}: {message}"),
            Failure::Validation { field: None, message } => f.write_str(message),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io { path, message } => write!(f, "{}: {message}", path.display()),
        }
    }
}

impl std::error::Error for Failure {}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match &e {
            LabError::InvalidArgument(_) | LabError::Structural(_) | LabError::Parse(_) => {
                Failure::validation(lab_message(&e))
            }
            LabError::Numerical(_) | LabError::Domain(_) => Failure::Numerical(lab_message(&e)),
            LabError::Io { path, source } => Failure::io(path.clone(), source),
        }
    }
}
