//! Exit codes and the machine-readable error report.

use std::fmt;

use drawdown_core::Error;
use serde_json::json;

/// Successful run or passed verification.
pub const EXIT_OK: i32 = 0;
/// Verification ran and failed.
pub const EXIT_VERIFY_FAIL: i32 = 2;
/// Numerical failure (bracketing, singular coefficients, regime).
pub const EXIT_NUMERICAL: i32 = 3;
/// Malformed flags, configuration or input files.
pub const EXIT_USAGE: i32 = 4;

/// A failure with its exit code, printed to stderr as JSON.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            kind: "Usage".into(),
            message: message.into(),
        }
    }

    /// Errors raised while reading an input file are usage errors whatever
    /// the underlying variant.
    pub fn input(path: &str, e: Error) -> Self {
        CliError {
            code: EXIT_USAGE,
            kind: variant_name(&e),
            message: format!("{path}: {e}"),
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind, "message": self.message, "exit_code": self.code } }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// `InvalidParams { .. }` → `InvalidParams`.
fn variant_name(e: &Error) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|ch: char| !ch.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParams { .. } | Error::Parse(_) | Error::DomainError(_) | Error::DegenerateDiffusion => {
                EXIT_USAGE
            }
            _ => EXIT_NUMERICAL,
        };
        CliError {
            code,
            kind: variant_name(&e),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}
