use thiserror::Error;

/// Errors raised anywhere in the forecasting engine.
#[derive(Debug, Error)]
pub enum FcwqError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("optimizer failed: {msg} (best value {best_value}, at {best_point:?})")]
    Optimization {
        msg: String,
        best_point: Vec<f64>,
        best_value: f64,
    },

    #[error("model fit failed: {0}")]
    ModelFit(String),

    #[error("singular design matrix: {0}")]
    Singular(String),

    #[error("pipeline aborted at origin {origin} during {stage}: {source}")]
    Pipeline {
        origin: usize,
        stage: &'static str,
        #[source]
        source: Box<FcwqError>,
    },
}

pub type Result<T> = std::result::Result<T, FcwqError>;

impl FcwqError {
    /// Copy of the error; I/O and parser errors are flattened to their message.
    pub fn clone_shallow(&self) -> FcwqError {
        match self {
            FcwqError::Io(e) => FcwqError::InvalidInput(format!("io error: {e}")),
            FcwqError::Csv(e) => FcwqError::InvalidInput(format!("csv error: {e}")),
            FcwqError::Json(e) => FcwqError::InvalidInput(format!("json error: {e}")),
            FcwqError::Config(s) => FcwqError::Config(s.clone()),
            FcwqError::Parse { row, msg } => FcwqError::Parse { row: *row, msg: msg.clone() },
            FcwqError::InvalidInput(s) => FcwqError::InvalidInput(s.clone()),
            FcwqError::DimensionMismatch { expected, got } => FcwqError::DimensionMismatch {
                expected: *expected,
                got: *got,
            },
            FcwqError::Domain(s) => FcwqError::Domain(s.clone()),
            FcwqError::Optimization { msg, best_point, best_value } => FcwqError::Optimization {
                msg: msg.clone(),
                best_point: best_point.clone(),
                best_value: *best_value,
            },
            FcwqError::ModelFit(s) => FcwqError::ModelFit(s.clone()),
            FcwqError::Singular(s) => FcwqError::Singular(s.clone()),
            FcwqError::Pipeline { origin, stage, source } => FcwqError::Pipeline {
                origin: *origin,
                stage,
                source: Box::new(source.clone_shallow()),
            },
        }
    }
}
