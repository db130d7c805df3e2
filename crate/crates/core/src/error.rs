use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("corpus has no usable documents")]
    EmptyCorpus,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot stratify, classes with fewer than 2 documents: {}", .labels.join(", "))]
    Stratification { labels: Vec<String> },
    #[error("class {class} has no documents")]
    EmptyClass { class: usize },
    #[error("no token reaches the minimum frequency")]
    EmptyVocabulary,
    #[error("vector file line {line}: {message}")]
    VectorFormat { line: usize, message: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("no usable class for prediction")]
    NoUsableClass,
    #[error("predicted class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("{which} hash mismatch: file {found:016x}, expected {expected:016x}")]
    HashMismatch {
        which: &'static str,
        found: u64,
        expected: u64,
    },
    #[error("file truncated")]
    Truncated,
    #[error("malformed tensor file: {0}")]
    Malformed(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
