use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("node id {id} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { id: usize, node_count: usize },

    #[error("coordinate count {got} does not match node count {expected}")]
    CoordinateCount { expected: usize, got: usize },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("negative value {value} at index {index} in {what}")]
    Negative {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("non-finite value at index {index} in {what}")]
    NonFinite { what: &'static str, index: usize },

    #[error("triangle ({0}, {1}, {2}) references a missing edge")]
    MissingEdge(usize, usize, usize),

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("energies are undefined for a zero flow")]
    UndefinedEnergies,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("requested {requested} eigenpairs but only {available} are available")]
    SpectrumExhausted { requested: usize, available: usize },

    #[error("eigenpair residual {residual:e} exceeds tolerance {tolerance:e}")]
    EigenResidual { residual: f64, tolerance: f64 },

    #[error("isolated node {0} has no similarity mass")]
    IsolatedNode(usize),

    #[error("not enough points ({points}) for {clusters} clusters")]
    TooFewPoints { points: usize, clusters: usize },

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("piecewise fit branch `{0}` has no data")]
    EmptyBranch(&'static str),

    #[error("harmonic space of this graph is trivial")]
    NoHarmonicSpace,

    #[error("triangle space of this graph is empty")]
    NoTriangles,

    #[error("generator produced a disconnected graph after {0} attempts")]
    Disconnected(usize),

    #[error("graph coordinates are required for {0}")]
    MissingCoordinates(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("unknown detector id `{0}`")]
    UnknownDetector(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

pub(crate) fn check_nonnegative(what: &'static str, values: &[f64]) -> Result<()> {
    check_finite(what, values)?;
    match values.iter().position(|&v| v < 0.0) {
        Some(index) => Err(Error::Negative {
            what,
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}
