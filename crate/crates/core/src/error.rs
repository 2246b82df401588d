use thiserror::Error;

pub type Result<T> = std::result::Result<T, HifError>;

#[derive(Debug, Error)]
pub enum HifError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at instance {row}, coordinate {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("anomalies already finalized; reopen the forest before inserting more")]
    AnomaliesFinalized,

    #[error("labels must contain both classes (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unknown {field} category `{value}`")]
    UnknownCategory { field: &'static str, value: String },

    #[error("{field} codebook is full ({capacity} slots); cannot add `{value}`")]
    CodebookFull {
        field: &'static str,
        capacity: usize,
        value: String,
    },

    #[error("unsupported model format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
