use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unitarity violated: norm drift {drift:.3e} exceeds {limit:.1e}")]
    Unitarity { drift: f64, limit: f64 },

    #[error("propagation failed at delay {delay_fs} fs, phase {phase_rad} rad: {source}")]
    ScanPoint {
        delay_fs: f64,
        phase_rad: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("trace schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn analysis(msg: impl Into<String>) -> Self {
        Error::Analysis(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
