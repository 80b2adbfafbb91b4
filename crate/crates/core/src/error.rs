use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("buffer length {actual} does not match dimensions (expected {expected})")]
    Dimension { expected: usize, actual: usize },
    #[error("histogram bin count {0} must be positive and divide 256")]
    BinCount(usize),
    #[error("histogram bin counts differ: {0} vs {1}")]
    BinMismatch(usize, usize),
    #[error("pearson correlation needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("cannot build a histogram of a zero-pixel frame")]
    EmptyFrame,
    #[error("timestamp {current}s follows {previous}s: stream must be non-decreasing")]
    StreamOrder { previous: f64, current: f64 },
    #[error("sampling rate must be positive, got {0}")]
    InvalidFps(f64),
    #[error("frame directory {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("failed to read image {path}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("frame at {current}s does not follow last admitted frame at {previous}s")]
    StreamOrder { previous: f64, current: f64 },
    #[error("cannot evict: only the active event is held")]
    EvictionImpossible,
    #[error("reservoir sampling requires n > K (n = {n}, K = {capacity})")]
    ReservoirPrecondition { n: u64, capacity: usize },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Error)]
pub enum LtmError {
    #[error("inverted time range [{start}, {end}]")]
    InvertedRange { start: f64, end: f64 },
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("cannot archive an event with no held frames")]
    EmptyEvent,
    #[error("{path}:{line}: {reason}")]
    CorruptEntry {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to encode image {path}: {reason}")]
    Image { path: PathBuf, reason: String },
}

/// A failure talking to a model backend (mock or remote).
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out after {0} s")]
    Timeout(u64),
    #[error("backend rejected request ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RlError {
    #[error("a group needs at least 2 members, got {0}")]
    GroupTooSmall(usize),
    #[error("ratios and advantages differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("ratio {index} is {value}; ratios must be positive")]
    NonPositiveRatio { index: usize, value: f64 },
    #[error("epsilon {0} is outside (0, 1)")]
    InvalidEpsilon(f64),
    #[error("reward {0} is not 0 or 1")]
    InvalidReward(f64),
}
