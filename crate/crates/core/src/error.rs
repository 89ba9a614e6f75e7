use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{function}: argument out of domain ({detail})")]
    Domain {
        function: &'static str,
        detail: String,
    },

    #[error("{function}: no evaluation regime reached the requested precision ({detail})")]
    LossOfPrecision {
        function: &'static str,
        detail: String,
    },

    #[error("integrand returned a non-finite value at x = {x}")]
    NonFiniteIntegrand { x: f64 },

    #[error("refractory kernel is infeasible: r({tau}) = {value}")]
    Infeasible { tau: f64, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("root finder failed: {0}")]
    RootFinding(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("event train is empty")]
    EmptyTrain,

    #[error("need at least 2 events to form an interval, got {0}")]
    TooFewEvents(usize),

    #[error("interval set is empty")]
    EmptyData,

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("fit results were computed on different data ({0})")]
    Provenance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            function,
            detail: detail.into(),
        }
    }
}
