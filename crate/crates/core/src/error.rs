use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Dataset content is missing, malformed or inconsistent.
    #[error("data error: {0}")]
    Data(String),

    /// The model is not in a state that allows the requested operation.
    #[error("model state error: {0}")]
    State(String),

    #[error("non-finite loss at epoch {epoch}, step {step} ({detail}); diagnostic checkpoint: {checkpoint:?}")]
    NonFinite {
        epoch: usize,
        step: usize,
        detail: String,
        checkpoint: Option<PathBuf>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Torch(#[from] tch::TchError),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn data<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Data(msg.into()))
}
