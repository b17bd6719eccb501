use std::io;

/// Errors produced anywhere in the extraction, simulation, and learning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("under-determined system: {0}")]
    UnderDetermined(String),

    #[error("unsupported datatype {0}")]
    UnsupportedDatatype(String),

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input or configuration rather
    /// than an internal failure.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Divergence { .. } | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
