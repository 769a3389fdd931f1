use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A derivative was requested at a point outside the open domain.
    #[error("{what}: argument {value} is outside the interior of the domain ({lo}, {hi})")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("parameter {theta:?} lies outside the parameter box")]
    ParameterSpace { theta: Vec<f64> },

    #[error("sample is empty")]
    EmptySample,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown divergence family `{0}`")]
    UnknownFamily(String),

    #[error("inner dual solve did not converge at theta = {theta:?} (status {status})")]
    InnerNotConverged { theta: Vec<f64>, status: String },

    #[error("estimation failed: {reason}")]
    EstimationFailed {
        reason: String,
        starts: Vec<crate::estimator::StartReport>,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
