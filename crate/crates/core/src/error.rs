use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate segment: {0}")]
    DegenerateSegment(String),

    #[error("degenerate timeline: {0}")]
    DegenerateTimeline(String),

    #[error("no temporal segment found in reply: {0:?}")]
    GroundingParse(String),

    #[error("feature error: {0}")]
    Feature(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// True for failures that originate in a language, vision or judge backend.
    pub fn is_backend(&self) -> bool {
        matches!(self, Error::Backend(_))
    }
}
