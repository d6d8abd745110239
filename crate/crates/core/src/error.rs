use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} reads z{parent}, which is not computed before it")]
    CyclicGraph { node: usize, parent: usize },

    #[error("node {node}: output bound {output_bound} is below the RKHS norm bound {rkhs_bound}")]
    BoundViolation {
        node: usize,
        output_bound: f64,
        rkhs_bound: f64,
    },

    #[error("input domain is empty or degenerate: {0}")]
    EmptyDomain(String),

    #[error("node {node}: {reason}")]
    InvalidNode { node: usize, reason: String },

    #[error("point lies outside the input domain at coordinate {index} ({value} not in [{lower}, {upper}])")]
    DomainViolation {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("node {node}: |z| = {value} exceeds its declared output bound {bound}")]
    OutputBoundViolation { node: usize, value: f64, bound: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("config error in {location}: {message}")]
    ConfigParse { location: String, message: String },

    #[error("ground truth is missing: {0}")]
    MissingGroundTruth(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigParse {
            location: location.into(),
            message: message.into(),
        }
    }
}
