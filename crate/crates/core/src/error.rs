use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid motion: {0}")]
    InvalidMotion(String),

    #[error("motion has {frames} frames, at least {min} are required")]
    MotionTooShort { frames: usize, min: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid step schedule: {0}")]
    Step(String),

    #[error("unknown Laban tag `{0}`")]
    UnknownTag(String),

    #[error("conflicting Laban tags for {component}: `{first}` and `{second}`")]
    ConflictingTags {
        component: &'static str,
        first: String,
        second: String,
    },

    #[error("unknown condition id {0}")]
    UnknownCondition(usize),

    #[error(
        "numeric instability at sampling step {step} (t = {t}): {reason}; loss = {loss:e} with lr = {lr}"
    )]
    NumericInstability {
        step: usize,
        t: usize,
        loss: f64,
        lr: f64,
        reason: String,
    },

    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("gradient contract violated: {0}")]
    Contract(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
