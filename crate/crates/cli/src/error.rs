use std::fmt;

use rla_core::RlaError;
use serde::Serialize;

/// Machine-readable failure shared by the CLI (stderr, exit 2) and the
/// HTTP service (response body).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    pub message: String,
    /// Cards still lacking an interpretation, for `ROUND_INCOMPLETE`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub missing: Option<Vec<String>>,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            error: code.to_string(),
            message: message.into(),
            missing: None,
        }
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(404, "NOT_FOUND", what)
    }

    pub fn schema(message: impl Into<String>) -> Self {
        ApiError::new(422, "SCHEMA_VIOLATION", message)
    }

    pub fn io(err: std::io::Error) -> Self {
        ApiError::new(500, "IO_ERROR", err.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.error, self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<RlaError> for ApiError {
    fn from(e: RlaError) -> Self {
        let status = match &e {
            RlaError::UnknownRound { .. } | RlaError::UnknownCase { .. } => 404,
            RlaError::UnexpectedCard { .. }
            | RlaError::AlreadyRecorded { .. }
            | RlaError::RoundIncomplete { .. }
            | RlaError::NoOpenRound
            | RlaError::RoundOpen { .. }
            | RlaError::RoundFinalized { .. }
            | RlaError::AuditComplete => 409,
            RlaError::ReplayMismatch(_) => 500,
            _ => 422,
        };
        let missing = match &e {
            RlaError::RoundIncomplete { missing } => Some(missing.clone()),
            _ => None,
        };
        ApiError {
            status,
            error: e.code().to_string(),
            message: e.to_string(),
            missing,
        }
    }
}
