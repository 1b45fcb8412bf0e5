//! Command line and HTTP service over a gridrisk workspace.

pub mod api;
pub mod cli;
pub mod query;
pub mod workspace;

use gridrisk_core::network::BranchId;
use gridrisk_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Stale(String),

    #[error("component {id}: {reason}")]
    BadComponent { id: BranchId, reason: &'static str },

    #[error("workspace has no samples; run `simulate` first")]
    NoSamples,

    #[error(transparent)]
    Core(#[from] Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => EXIT_USAGE,
            AppError::Stale(_) | AppError::BadComponent { .. } | AppError::NoSamples => EXIT_VALIDATION,
            AppError::Core(e) => match e {
                Error::Refused { .. } => EXIT_REFUSED,
                Error::Parse { .. }
                | Error::MissingBlock(_)
                | Error::Validation(_)
                | Error::Schema { .. }
                | Error::Config(_)
                | Error::UnknownBranch(_)
                | Error::Domain(_)
                | Error::Format(_)
                | Error::Imbalance { .. }
                | Error::InsufficientSamples { .. } => EXIT_VALIDATION,
                _ => EXIT_FAILURE,
            },
            AppError::Json(_) => EXIT_VALIDATION,
            AppError::Io(_) => EXIT_FAILURE,
        }
    }

    /// Machine-readable error body shared by the command line and the service.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = serde_json::json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            AppError::BadComponent { id, .. } => body["id"] = serde_json::json!(id),
            AppError::Core(Error::UnknownBranch(id)) => body["id"] = serde_json::json!(id),
            AppError::Core(Error::Refused { count, cap }) => {
                body["count"] = serde_json::json!(count.to_string());
                body["cap"] = serde_json::json!(cap.to_string());
            }
            AppError::Core(Error::Validation(v)) => body["violations"] = serde_json::json!(v),
            _ => {}
        }
        body
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Usage(_) => "usage",
            AppError::Stale(_) => "stale",
            AppError::BadComponent { .. } => "bad_component",
            AppError::NoSamples => "no_samples",
            AppError::Core(Error::Refused { .. }) => "refused",
            AppError::Io(_) => "io",
            _ if self.exit_code() == EXIT_VALIDATION => "validation",
            _ => "internal",
        }
    }
}
