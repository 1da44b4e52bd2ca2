use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {context}: {value}")]
    NonFinite { context: String, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported neuron family for {op}: {family}")]
    UnsupportedFamily { op: &'static str, family: String },

    #[error("unknown neuron model `{0}`")]
    UnknownModel(String),

    #[error("point ({u}, {v}) is off the nullclines (residual {residual:e})")]
    OffNullcline { u: f64, v: f64, residual: f64 },

    #[error("architecture parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("shape mismatch at layer {layer}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        layer: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("missing forward cache: {0}")]
    MissingCache(String),

    #[error("malformed {format} data at offset {offset}: {message}")]
    Format {
        format: &'static str,
        offset: u64,
        message: String,
    },

    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    EventOutOfBounds {
        index: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable kind tag, used by the CLI on stderr.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } => "non_finite",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::UnsupportedFamily { .. } => "unsupported_family",
            Error::UnknownModel(_) => "unknown_model",
            Error::OffNullcline { .. } => "off_nullcline",
            Error::Parse { .. } => "parse",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::MissingCache(_) => "missing_cache",
            Error::Format { .. } => "format",
            Error::EventOutOfBounds { .. } => "event_out_of_bounds",
            Error::Diverged { .. } => "diverged",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn ensure_finite(context: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context: context.to_string(),
            value,
        })
    }
}
