use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} out of range for a network with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("trajectories live on different time grids")]
    GridMismatch,

    #[error("numerical instability at step {step} (t = {time}): {detail}")]
    Instability {
        step: usize,
        time: f64,
        detail: String,
    },

    #[error("slope {slope} outside the invertible range [{lo}, {hi}] of g' on edge {edge}")]
    NotInvertible {
        edge: usize,
        slope: f64,
        lo: f64,
        hi: f64,
    },

    #[error("bang-bang control requires a weight cost declared concave")]
    NotConcave,

    #[error("reachability sets are required for penalty-reach mode")]
    MissingReachability,

    #[error("sweep diverged: residual grew for {window} consecutive iterations (iteration {iterations}, residual {residual:e})")]
    Diverged {
        iterations: usize,
        residual: f64,
        window: usize,
    },

    #[error("{what} did not converge within {iterations} iterations (residual {residual:e})")]
    NotConverged {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("infeasible deviation probe: {0}")]
    InfeasibleProbe(String),

    #[error("brute-force search space of {candidates} candidates exceeds the cap of {cap}")]
    SearchSpaceTooLarge { candidates: f64, cap: usize },

    #[error("instance with {n} nodes exceeds the oracle limit of {limit}")]
    InstanceTooLarge { n: usize, limit: usize },

    #[error("costate trajectory does not hold the requested entries ({0})")]
    CostateUnavailable(&'static str),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
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

    pub(crate) fn dim(what: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            found,
        }
    }
}
