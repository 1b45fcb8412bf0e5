use thiserror::Error;

use crate::network::{BranchId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in `{block}` row {row}, column {column}: {message}")]
    Parse {
        block: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("missing `{0}` block in case text")]
    MissingBlock(String),

    #[error("network failed validation: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("island {island} has a singular susceptance matrix ({buses} buses)")]
    SingularIsland { island: usize, buses: usize },

    #[error("island {island} is unbalanced by {mismatch:.3e} MW")]
    Imbalance { island: usize, mismatch: f64 },

    #[error("unknown branch id {0}")]
    UnknownBranch(BranchId),

    #[error("sample {sample} carries no loading trace for branch {branch}")]
    MissingTrace { sample: u64, branch: BranchId },

    #[error("sample {sample} has zero probability under the baseline model (component {branch})")]
    ZeroProbability { sample: u64, branch: BranchId },

    #[error("at least {needed} samples are required, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("risk estimate is zero; relative error is undefined")]
    ZeroRisk,

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("refusing to enumerate {count} cases (cap {cap})")]
    Refused { count: u128, cap: u128 },

    #[error("linear program {0}")]
    Lp(#[from] crate::lp::LpError),

    #[error("malformed data file: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
