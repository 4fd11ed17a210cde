use thiserror::Error;

use crate::canonical::EncodingError;
use crate::boundary::PatternError;

pub type Result<T, E = KernelError> = std::result::Result<T, E>;

/// Errors surfaced by kernel operations.
///
/// Boundary rejections and energy shortfalls on `submit_action` are not
/// errors: they are [`crate::model::SubmitOutcome`] variants.
#[derive(Debug, Error)]
pub enum KernelError {
    #[error("policy violation: {0}")]
    PolicyViolation(String),

    #[error("actor {0} already exists")]
    DuplicateActor(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("insufficient energy: need {needed}, have {available}")]
    InsufficientEnergy { needed: u64, available: u64 },

    #[error("invalid payload field `{field}`: {reason}")]
    Payload { field: String, reason: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error(transparent)]
    Pattern(#[from] PatternError),

    #[error(transparent)]
    Encoding(#[from] EncodingError),

    #[error("log consistency violated: {0}")]
    Consistency(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("signing key error: {0}")]
    Key(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("storage error: {0}")]
    Storage(#[from] rusqlite::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl KernelError {
    pub(crate) fn payload(field: impl Into<String>, reason: impl Into<String>) -> Self {
        KernelError::Payload {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable code used by the HTTP API and CLI.
    pub fn code(&self) -> &'static str {
        match self {
            KernelError::PolicyViolation(_) | KernelError::DuplicateActor(_) => "POLICY_VIOLATION",
            KernelError::NotFound(_) => "NOT_FOUND",
            KernelError::InsufficientEnergy { .. } => "INSUFFICIENT_ENERGY",
            KernelError::Payload { .. } | KernelError::Encoding(_) => "PAYLOAD_ERROR",
            KernelError::State(_) => "STATE_ERROR",
            KernelError::Pattern(_) | KernelError::Config(_) | KernelError::Format(_) => {
                "BAD_REQUEST"
            }
            KernelError::Consistency(_)
            | KernelError::Key(_)
            | KernelError::Storage(_)
            | KernelError::Io(_) => "INTERNAL",
        }
    }
}

impl From<crate::tlog::TlogError> for KernelError {
    fn from(e: crate::tlog::TlogError) -> Self {
        match e {
            crate::tlog::TlogError::OutOfRange { index, size } => {
                KernelError::NotFound(format!("index {index} in a tree of size {size}"))
            }
            other => KernelError::Consistency(other.to_string()),
        }
    }
}
