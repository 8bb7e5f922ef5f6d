use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid interval: end time {end} precedes start time {start}")]
    BackwardInterval { start: f64, end: f64 },

    #[error("non-finite {what} at node {path}")]
    NonFinite { what: &'static str, path: String },

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    #[error("unknown example `{0}`")]
    UnknownExample(String),

    #[error("no reference fixture for {example} d={d} ({provenance})")]
    MissingFixture {
        example: String,
        d: usize,
        provenance: String,
    },

    #[error("reference value has zero norm")]
    ZeroReference,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid experiment: {0}")]
    InvalidSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
