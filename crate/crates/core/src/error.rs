use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("degenerate binning: need at least {needed} distinct values, found {found}")]
    DegenerateBinning { needed: usize, found: usize },

    #[error("degenerate range: min == max == {0}")]
    DegenerateRange(f64),

    #[error("unknown level {value:?} for categorical column {column:?}")]
    UnknownLevel { column: String, value: String },

    #[error("non-finite value in continuous column {column:?} at row {row}")]
    NonFiniteFeature { column: String, row: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("label set is empty")]
    EmptyLabels,

    #[error("all model branches are disabled")]
    AllBranchesDisabled,

    #[error("stratification error: class {class} has {count} member(s), need at least 2")]
    Stratification { class: u8, count: usize },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error in {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("dangling label identifier {0:?}")]
    DanglingLabel(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint checksum mismatch (file truncated or corrupted)")]
    Checksum,

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("schema fingerprint mismatch: checkpoint has {expected}, dataset has {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("leakage audit failed: {0}")]
    Leakage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Short stable identifier used in machine-parsable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::Contract(_) => "contract",
            Error::MissingData(_) => "missing_data",
            Error::DegenerateBinning { .. } => "degenerate_binning",
            Error::DegenerateRange(_) => "degenerate_range",
            Error::UnknownLevel { .. } => "unknown_level",
            Error::NonFiniteFeature { .. } => "non_finite_feature",
            Error::Schema(_) => "schema",
            Error::EmptyLabels => "empty_labels",
            Error::AllBranchesDisabled => "all_branches_disabled",
            Error::Stratification { .. } => "stratification",
            Error::Divergence { .. } => "divergence",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::DanglingLabel(_) => "dangling_label",
            Error::Checkpoint(_) => "checkpoint",
            Error::Checksum => "checksum",
            Error::Version { .. } => "version",
            Error::FingerprintMismatch { .. } => "fingerprint_mismatch",
            Error::Leakage(_) => "leakage",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
