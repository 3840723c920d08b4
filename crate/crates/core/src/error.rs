use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Pipeline parameters that do not fit together (sample rate, FFT size, order...).
    #[error("configuration error: {0}")]
    Config(String),
    /// Input data that cannot be processed (non-finite samples, malformed WAV content...).
    #[error("data error: {0}")]
    Data(String),
    /// A caller passed buffers of the wrong size.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A quantity is mathematically undefined for the given input.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient data: {available} samples overlap, need at least {required}")]
    InsufficientData { available: usize, required: usize },
    #[error("{} referenced file(s) missing: {}", .0.len(), display_paths(.0))]
    MissingFiles(Vec<PathBuf>),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Failures while decoding a CLCW weight file.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LoadError {
    #[error("bad magic bytes {found:?}, expected \"CLCW\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported CLCW version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file while reading {context}: need {expected} bytes, {available} available")]
    Truncated {
        context: String,
        expected: usize,
        available: usize,
    },
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
    #[error("duplicate tensor {0}")]
    DuplicateTensor(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor {name}: non-finite value at index {index}")]
    NonFinite { name: String, index: usize },
    #[error("tensor {name}: invalid metadata value {value}")]
    InvalidMetadata { name: String, value: f32 },
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),
}
