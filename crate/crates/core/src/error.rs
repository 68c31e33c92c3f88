use std::path::PathBuf;

/// Errors produced anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument to {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("tensor {id} does not require grad")]
    Detached { id: usize },

    #[error("{op}: size {size} is not a power of two; pad the image first")]
    NotPowerOfTwo { op: &'static str, size: usize },

    #[error("optimization diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: malformed file at byte {offset}: {detail}", path.display())]
    Format {
        path: PathBuf,
        offset: usize,
        detail: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("missing ground truth: {0}")]
    MissingGroundTruth(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Format { .. } => 4,
            Error::Divergence { .. } | Error::NonFinite { .. } => 3,
            _ => 2,
        }
    }
}
