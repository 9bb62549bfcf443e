use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {what} (expected {expected}, got {actual})")]
    Shape {
        op: &'static str,
        what: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expected a {expected} image, got {actual}")]
    WrongColorSpace {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("stale cache: backward called with a cache from a different layer or parameter version")]
    StaleCache,

    #[error("degenerate correlation: {0}")]
    DegenerateCorrelation(&'static str),

    #[error("non-finite gradient at optimizer step {step}")]
    NonFiniteGradient { step: u64 },

    #[error("weights: bad magic bytes {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("weights: unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("weights: truncated file (expected {expected} bytes, got {actual})")]
    Truncated { expected: u64, actual: u64 },

    #[error("weights: duplicate tensor name `{0}`")]
    DuplicateName(String),

    #[error("weights: unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("weights: malformed file: {0}")]
    Malformed(String),

    #[error("weights: missing tensor `{0}`")]
    MissingTensor(String),

    #[error("weights: tensor `{name}` has shape {actual:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("config {file}: line {line}: {msg}")]
    Config {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("manifest {file}: line {line}: {msg}")]
    Manifest {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("corrupt image stream in {path}: {msg}")]
    CorruptImage { path: PathBuf, msg: String },

    #[error("feature extraction failed for {} image(s):\n{}", .0.len(), .0.join("\n"))]
    Extraction(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        what: impl Into<String>,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        Error::Shape {
            op,
            what: what.into(),
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
