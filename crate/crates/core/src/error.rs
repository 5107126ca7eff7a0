//! Error type shared across the library.

use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while loading data, tagging, mining or
/// evaluating. CSV and category errors carry enough context (file, line,
/// offending token) to be actionable without a debugger.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed row: {message}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: sample index {got} is not monotone (previous was {previous})")]
    NonMonotoneSampleIndex {
        path: PathBuf,
        line: u64,
        got: usize,
        previous: usize,
    },

    #[error("{path}:{line}: duplicate row for sample {k} and object {id}")]
    DuplicateObjectRow {
        path: PathBuf,
        line: u64,
        k: usize,
        id: u64,
    },

    #[error(
        "sample time declared by the data ({declared} s) does not match params.ts ({expected} s)"
    )]
    SampleTimeMismatch { declared: f64, expected: f64 },

    #[error("object row at sample {k} lies outside the ego timeline of {n_samples} samples")]
    SampleOutOfRange { k: usize, n_samples: usize },

    #[error("series is empty")]
    EmptySeries,

    #[error("series contains a non-finite value at sample {k}")]
    NonFiniteValue { k: usize },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("unknown value `{value}` for dimension `{dimension}`; valid values are: {}", valid.join(", "))]
    UnknownTagValue {
        dimension: String,
        value: String,
        valid: Vec<&'static str>,
    },

    #[error("unknown tag dimension `{0}`")]
    UnknownTagDimension(String),

    #[error("category error: {0}")]
    Category(String),

    #[error("category references dimension `{dimension}` which the tag data does not provide for {subject_kind} subjects")]
    UntaggedDimension {
        dimension: String,
        subject_kind: String,
    },

    #[error("instance does not hold against the tag data: {0}")]
    InvalidInstance(String),

    #[error("no environment source: dataset has neither a road_class column nor positions with a road map")]
    EnvironmentSourceMissing,

    #[error("tag file is malformed at line {line}: {message}")]
    MalformedTagFile { line: u64, message: String },

    #[error("instance file is malformed at line {line}: {message}")]
    MalformedInstanceFile { line: u64, message: String },

    #[error("oracle tagger accepts at most {max} samples, got {n}")]
    OracleInputTooLarge { n: usize, max: usize },

    #[error("scene description is inconsistent: {0}")]
    InconsistentScene(String),

    #[error("road map error: {0}")]
    RoadMap(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Helper for wrapping i/o errors with the path they happened on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
