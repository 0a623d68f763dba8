use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidShape { op: &'static str, msg: String },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("backward must start from a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image decode error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-parsable category, used by the CLI on stderr.
    pub fn category(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } | Error::InvalidShape { .. } => "shape",
            Error::NonFinite { .. } => "numeric",
            Error::NotScalar(_) => "shape",
            Error::InvalidParameter(_) | Error::OutOfRange(_) => "parameter",
            Error::Data(_) | Error::Image(_) => "data",
            Error::Config(_) => "config",
            Error::Format(_) | Error::Json(_) => "format",
            Error::Io(_) => "io",
        }
    }
}
