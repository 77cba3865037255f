use std::path::PathBuf;

use thiserror::Error;

use crate::nn::NeuronId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("neuron {neuron} is degenerate (preactivation {preactivation:e} within tolerance of zero)")]
    DegeneratePoint {
        neuron: NeuronId,
        preactivation: f64,
    },

    #[error("ReLU derivative is undefined at the kink a = 0")]
    KinkDerivative,

    #[error("operation requires a piecewise-linear (all hidden ReLU) network")]
    NotPiecewiseLinear,

    #[error("{what} cap exceeded: {count} > {cap}")]
    CapExceeded {
        what: &'static str,
        count: usize,
        cap: usize,
    },

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("unknown variable id {0}")]
    UnknownVariable(usize),

    #[error("variable {name}: lower bound {lower} exceeds upper bound {upper}")]
    BoundInversion { name: String, lower: f64, upper: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("missing big-M bounds for neuron {0}")]
    MissingBounds(NeuronId),

    #[error("unbounded input box: {0}")]
    UnboundedBox(String),

    #[error("bound-tightening sub-problem infeasible at neuron {0}; the input box is inconsistent")]
    InconsistentBox(NeuronId),

    #[error("LP numerical failure: {0}")]
    Numerical(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no feasible starting pattern: {0}")]
    NoFeasibleStart(String),

    #[error("no training row covers the torque profile at time step {0}")]
    NoFeasibleRow(usize),

    #[error("no seed input is classified as label {label} with the required margin")]
    NoQualifyingSeed { label: usize },

    #[error("invalid label {label} for a classifier with {classes} outputs")]
    InvalidLabel { label: usize, classes: usize },

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("multiplier residuals too large to interpret ({0:e})")]
    ResidualsTooLarge(f64),

    #[error("model has complementarity pairs; LP export is lossy (pass allow_lossy to override)")]
    LossyExport,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
