use thiserror::Error;

/// Errors raised across the ingestion, featurization, model and training layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error at row {row}: {message}")]
    DataRow { row: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("missing step: {0}")]
    MissingStep(String),

    #[error("resampling error: {0}")]
    Resampling(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by numerical blow-up rather than bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Divergence { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
