use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or dimensions do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// NaN/Inf or otherwise unusable numeric input.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at byte offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    /// Input for which the requested quantity is undefined (e.g. cosine of a zero vector).
    #[error("undefined input: {0}")]
    Undefined(String),

    #[error("training diverged at round {round}, client {client}, batch {batch}: {msg}")]
    Diverged {
        round: usize,
        client: usize,
        batch: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
