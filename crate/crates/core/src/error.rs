use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("document {doc_id}: {message}")]
    Validation { doc_id: String, message: String },

    #[error("invalid label scheme: {0}")]
    Scheme(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("agreement undefined: no document has two or more labels")]
    AgreementUndefined,

    #[error("conflation unlearnable: no document has two or more labels")]
    ConflationUnlearnable,

    #[error("invalid model spec at `{token}`: {message}")]
    ModelSyntax { token: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0} undefined: truth contains a single class")]
    MetricUndefined(&'static str),

    #[error("invalid metric input: {0}")]
    MetricInput(String),

    #[error("unknown metric `{0}` (expected one of: auc, accuracy, f1)")]
    UnknownMetric(String),

    #[error("percentile of an empty sample")]
    EmptySamples,

    #[error("all {0} trials produced an undefined metric")]
    AllTrialsUndefined(usize),

    #[error("{failed} of {total} suite configurations failed")]
    SuiteFailed { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
