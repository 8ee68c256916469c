use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed data that violates an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Internal call sequencing was broken (stale cache, mismatched layouts).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("the ROI admits no sliding windows")]
    EmptyRoi,

    #[error("placement failed: {0}")]
    Capacity(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
