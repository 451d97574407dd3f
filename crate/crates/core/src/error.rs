use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no outcome field present (total_raised, ipo_valuation, acquisition_price)")]
    MissingOutcome,

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("generator error: {0}")]
    Generator(String),

    #[error("unknown category {label:?} for feature {feature}")]
    UnknownCategory { feature: String, label: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("encode error: {0}")]
    Encode(String),

    #[error("embedding error: {0}")]
    Embed(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no convergence after {iterations} iterations (gradient max-norm {gradient_norm:e})")]
    Convergence { iterations: usize, gradient_norm: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid state: {0}")]
    State(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("sampling error: {0}")]
    Sample(String),

    #[error("ablation error: {0}")]
    Ablation(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    Fingerprint { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(row: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            row,
            message: message.into(),
        }
    }
}
