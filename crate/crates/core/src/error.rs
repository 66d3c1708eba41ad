use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("row {row}, column `{column}`: {message}")]
    MalformedRow {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("invalid value for {field}: {message}")]
    InvalidValue { field: String, message: String },

    #[error("duplicate module id {0}")]
    DuplicateModule(u32),

    #[error("no modules")]
    NoModules,

    #[error("unknown fault kind `{0}`")]
    UnknownFaultKind(String),

    #[error("factor must be < 1 (got {0})")]
    FactorTooLarge(f64),

    #[error("factor must be > 0 (got {0})")]
    FactorNotPositive(f64),

    #[error("not enough samples: need more than {required}, got {got}")]
    TooFewSamples { required: usize, got: usize },

    #[error("samples have zero variance")]
    ZeroVariance,

    #[error("component {component} has a singular covariance; use degenerate_pdf")]
    SingularCovariance { component: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid indices: {0}")]
    InvalidIndices(String),

    #[error("zero vector has no pseudo-inverse")]
    ZeroVector,

    #[error("support outside grid")]
    SupportOutsideGrid,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch")]
    GridMismatch,

    #[error("majority undefined: need at least 3 modules, got {0}")]
    MajorityUndefined(usize),

    #[error("need at least 2 modules, got {0}")]
    TooFewModules(usize),

    #[error("group `{group}` has {size} modules; at least 3 required")]
    GroupTooSmall { group: String, size: usize },

    #[error("module {0} is not assigned to any group")]
    Ungrouped(u32),

    #[error("power columns do not match fleet config: {0}")]
    ColumnMismatch(String),

    #[error("unsupported format tag `{0}`")]
    UnsupportedFormat(String),

    #[error("{path}: {cause}")]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml: {0}")]
    TomlSer(#[from] toml::ser::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidValue {
            field: field.into(),
            message: message.into(),
        }
    }
}
