use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward called without a recorded forward context")]
    MissingContext,

    #[error("ppm: unsupported format {0:?} (only binary P6 is supported)")]
    UnsupportedFormat(String),

    #[error("ppm: maxval {0} is not supported (expected 255)")]
    UnsupportedMaxval(u32),

    #[error("ppm: malformed header: {0}")]
    BadHeader(String),

    #[error("ppm: pixel data too short: expected {expected} bytes, found {found}")]
    ShortPixelData { expected: usize, found: usize },

    #[error("weights: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("weights: unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("weights: record {index} ({name}) has shape {found:?}, expected {expected:?}")]
    WeightShape {
        index: usize,
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("weights: file truncated while reading {0}")]
    Truncated(String),

    #[error("weights: {0} trailing bytes after the last record")]
    TrailingBytes(usize),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch}, batch {batch} (loss = {loss})")]
    Divergence { epoch: usize, batch: usize, loss: f32 },

    #[error("sidecar line {line}: {message}")]
    Sidecar { line: usize, message: String },

    #[error("frame stream: {0}")]
    Stream(String),

    #[error("source {source_id}: frame {got} arrived after frame {last}")]
    OutOfOrder {
        source_id: String,
        last: u64,
        got: u64,
    },

    #[error("record log line {line}: {message}")]
    Log { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
