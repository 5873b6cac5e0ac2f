use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("transform has non-finite entries")]
    NonFinite,
    #[error("rotation is not orthonormal (deviation {deviation:.3e})")]
    NonOrthonormal { deviation: f64 },
}

/// Errors raised by the file readers and writers.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: length {len} bytes is not a multiple of the {record}-byte record size")]
    TruncatedFile { path: PathBuf, len: u64, record: usize },
    #[error("{path}: non-finite value at record {index}")]
    NonFiniteValue { path: PathBuf, index: usize },
    #[error("{path}: expected {expected} records, found {actual}")]
    LengthMismatch { path: PathBuf, expected: usize, actual: usize },
    #[error("{path}:{line}: {reason}")]
    MalformedLine { path: PathBuf, line: usize, reason: String },
    #[error("{path}:{line}: rotation is not orthonormal (deviation {deviation:.3e})")]
    NonOrthonormalRotation { path: PathBuf, line: usize, deviation: f64 },
    #[error("{path}: invalid category byte {value} at point {index}")]
    InvalidCategory { path: PathBuf, index: usize, value: u8 },
    #[error("{path}: invalid label value {value:#x} at point {index}")]
    InvalidLabel { path: PathBuf, index: usize, value: u32 },
    #[error("{path}:{line}: unknown superclass {name:?}")]
    UnknownSuperclass { path: PathBuf, line: usize, name: String },
    #[error("{path}:{line}: box has zero area")]
    DegenerateBox { path: PathBuf, line: usize },
    #[error("{path}: {reason}")]
    InvalidConfig { path: PathBuf, reason: String },
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io { path: path.into(), source }
    }
}

/// Errors from the per-frame algorithms.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("ground mask has {actual} entries but the cloud has {expected} points")]
    MaskLengthMismatch { expected: usize, actual: usize },
    #[error("class id {0} is not in the class table and no fallback is configured")]
    UnknownClassId(u16),
    #[error("no point is valid in both streams across the corpus")]
    EmptyCorpus,
    #[error("frustum contains no points")]
    EmptyFrustum,
    #[error("group {0:?} has no frames")]
    EmptyGroup(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), Error> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { what, expected, actual })
    }
}

/// Errors from the stage orchestration.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing input: {path}")]
    MissingInput { path: PathBuf },
    #[error("frame count mismatch: {what} has {actual} entries but there are {expected} scans")]
    FrameCountMismatch { what: String, expected: usize, actual: usize },
    #[error("config error at {key}: {reason}")]
    Config { key: String, reason: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("frame {frame}: {source}")]
    Frame {
        frame: u32,
        #[source]
        source: Error,
    },
    #[error(transparent)]
    Algorithm(#[from] Error),
}

impl PipelineError {
    /// True for errors caused by the invocation rather than by the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, PipelineError::Config { .. })
    }
}
