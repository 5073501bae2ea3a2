use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("correlation undefined: {0} is constant")]
    UndefinedCorrelation(&'static str),

    #[error("cannot resolve feature factor `{0}`")]
    FeatureResolution(String),

    #[error("design matrix is singular; linearly dependent features: {}", .0.join(", "))]
    Singular(Vec<String>),

    #[error("insufficient data: {samples} samples for {features} features (need samples > features)")]
    InsufficientData { samples: usize, features: usize },

    #[error("feature selection rejected every candidate")]
    EmptySelection,

    #[error("artifact is {size} bytes, exceeding the {budget}-byte budget by {}", .size - .budget)]
    SizeBudget { size: usize, budget: usize },

    #[error("artifact integrity check failed: {0}")]
    Integrity(String),

    #[error("unsupported artifact version `{0}`")]
    Version(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that stem from numerical degeneracy rather than bad input data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::InsufficientData { .. }
                | Error::UndefinedCorrelation(_)
                | Error::EmptySelection
        )
    }
}
