use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A NaN or infinity surfaced where only finite values are allowed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed file contents (bad magic, truncation, inconsistent header).
    #[error("format error: {0}")]
    Format(String),

    /// Gradient vanished identically; the optimization cannot move.
    #[error("stalled: {0}")]
    Stalled(String),

    /// The requested check is undefined in this regime (e.g. clipped RFs).
    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
