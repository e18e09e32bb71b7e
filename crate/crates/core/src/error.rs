use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the verifier library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at layer {layer}: expected {expected}, got {actual}")]
    LayerDimension {
        layer: usize,
        expected: usize,
        actual: usize,
    },

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{path}:{line}:{column}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: schema violation at {location}: {message}")]
    Schema {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid property: {0}")]
    InvalidProperty(String),

    #[error("invalid bounds l={lower} > u={upper}")]
    InvalidBounds { lower: f64, upper: f64 },

    #[error("missing intermediate bounds for layer {0}")]
    MissingBounds(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("neuron ({layer}, {index}) is not an unstable free neuron")]
    NotBranchable { layer: usize, index: usize },

    #[error("enumeration budget exceeded: {neurons} hidden neurons (limit {limit})")]
    BudgetExceeded { neurons: usize, limit: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
