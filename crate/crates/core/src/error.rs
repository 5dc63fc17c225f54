use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix `{name}` contains a non-finite entry")]
    NonFinite { name: String },

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("matrix `{name}` is not positive definite")]
    NotPositiveDefinite { name: String },

    #[error("symmetric factorization failed: eigenvalue {eigenvalue:e} is negative")]
    FactorizationFailure { eigenvalue: f64 },

    #[error("the pair (H, C) is not observable")]
    NotDetectable,

    #[error("the pair (H, D) with W = D D^T is not controllable")]
    NotStabilizable,

    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("privacy-noise covariance V is singular or not positive definite")]
    SingularV,

    #[error("a priori covariance is singular (condition ratio {ratio:e})")]
    SingularSigma { ratio: f64 },

    #[error("C is not diagonal: the bounds assume a square, diagonal output matrix (diagonal-C assumption)")]
    NotDiagonal,

    #[error("noise scale sigma[{index}] = {value} must be positive")]
    NonPositiveSigma { index: usize, value: f64 },

    #[error("output channel {index} has C_ii = 0, so it carries no information")]
    DegenerateChannel { index: usize },

    #[error("{name} = {value} is outside its domain: {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid calibration target field `{field}`: {reason}")]
    InvalidTarget { field: &'static str, reason: String },

    #[error("tr(H^T H) = 0; the calibration formulas are undefined for H = 0")]
    DegenerateH,

    #[error("network has no agents")]
    EmptyNetwork,

    #[error("duplicate agent id `{0}`")]
    DuplicateAgent(String),

    #[error("agent `{id}`: {source}")]
    Agent { id: String, source: Box<Error> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// Whether the failure is numerical (solver or factorization trouble)
    /// rather than a problem with the user's input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NoConvergence { .. }
            | Error::SingularV
            | Error::SingularSigma { .. }
            | Error::FactorizationFailure { .. } => true,
            Error::Agent { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
