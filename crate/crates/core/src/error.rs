use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("mask has no set pixel")]
    EmptyMask,

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("prompt has no points")]
    NoPromptPoints,

    #[error("prompt lies outside the {width}x{height} image")]
    PromptOutOfBounds { width: usize, height: usize },

    #[error("cluster count {0} not supported (expected 2 or 3)")]
    InvalidK(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("scene does not match request: {0}")]
    SceneMismatch(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("request timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("failed to write report: {0}")]
    ReportWrite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of an external painter/projector service.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::BackendUnavailable(_) | Error::Protocol(_) | Error::Timeout(_)
        )
    }
}
