use std::path::PathBuf;

use thiserror::Error;

/// Failures raised by the external scorer session.
#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("failed to spawn scorer `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty scorer command")]
    EmptyCommand,
    #[error("cannot parse scorer command `{0}`")]
    BadCommand(String),
    #[error("no handshake from scorer within {0:?}")]
    HandshakeTimeout(std::time::Duration),
    #[error("invalid handshake line: {0}")]
    BadHandshake(String),
    #[error("scorer speaks protocol version {found}, expected {expected}")]
    VersionMismatch { expected: u64, found: u64 },
    #[error("scorer closed its output")]
    Closed,
    #[error("timed out waiting for response to request {0}")]
    ResponseTimeout(u64),
    #[error("broken pipe writing to scorer: {0}")]
    BrokenPipe(#[source] std::io::Error),
    #[error("malformed response `{line}`: {reason}")]
    Malformed { line: String, reason: String },
    #[error("response id {found} does not match request id {expected}")]
    IdMismatch { expected: u64, found: u64 },
    #[error("scorer returned {found} rows for {expected} texts")]
    CountMismatch { expected: usize, found: usize },
    #[error("row {row}: invalid probability pair [{a}, {b}]")]
    BadProbability { row: usize, a: f64, b: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("row {row}: missing label in a labeled split")]
    MissingLabel { row: usize },
    #[error("row {row}: unrecognized label `{value}`")]
    UnknownLabel { row: usize, value: String },
    #[error("row {row}: duplicate id `{id}`")]
    DuplicateId { row: usize, id: String },
    #[error("corpus `{0}` contains unlabeled documents")]
    Unlabeled(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("every document tokenizes to nothing")]
    NoTerms,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite feature value in example {0}")]
    NonFinite(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("empty pool")]
    EmptyPool,
    #[error("seed set too small: class {class} would get no seed documents")]
    SeedTooSmall { class: &'static str },
    #[error("oracle has no label for id `{0}`")]
    OracleMissing(String),
    #[error("class {class} has {count} members, fewer than k = {k}")]
    ClassTooSmall {
        class: &'static str,
        count: usize,
        k: usize,
    },
    #[error("model fingerprint {model} does not match vectorizer {vectorizer}")]
    FingerprintMismatch { model: String, vectorizer: String },
    #[error("invalid probability pair [{0}, {1}]")]
    InvalidProbability(f64, f64),
    #[error("scorer has not been fitted")]
    NotFitted,
    #[error("no score available for text `{0}`")]
    MissingScore(String),
    #[error("scorer protocol: {0}")]
    Protocol(#[from] ProtocolError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
