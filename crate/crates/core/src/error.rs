use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("unknown model {0:?} (expected A, B or C)")]
    UnknownModel(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("non-finite input to integrator")]
    NonFinite,
    #[error("invalid integration span: t_end = {t_end}, dt = {dt}")]
    InvalidSpan { t_end: f64, dt: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("sampling times must be finite, non-negative and strictly increasing (index {index})")]
    BadTimes { index: usize },
    #[error("sampling plan has no times")]
    EmptyPlan,
    #[error("repetition count must be at least 1")]
    ZeroRepetitions,
    #[error("gaussian noise variance needs at least 3 repetitions, got {0}")]
    TooFewRepetitions(u64),
    #[error("number of series must be at least 1")]
    NoSeries,
    #[error("malformed trace CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] IoErrorKind),
}

/// `std::io::Error` is neither `Clone` nor `PartialEq`; keep its rendered form.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct IoErrorKind(pub String);

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(IoErrorKind(e.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("time grid is not uniform (step {index} differs); use the likelihood estimator for irregular sampling")]
    NonUniformGrid { index: usize },
    #[error("zero padding factor must be at least 1")]
    BadPadding,
    #[error("spectrum has no interior maximum")]
    NoInteriorPeak,
    #[error("z inversion requires the z-drive model")]
    WrongModel,
    #[error("design has no parameter-bearing term (sin(theta_prep) sin(theta_meas) = 0)")]
    InvisibleDesign,
    #[error("no valid samples survived the inversion mask")]
    NoValidSamples,
    #[error("every trace failed: {0}")]
    AllTracesFailed(Box<EstimateError>),
    #[error("no traces supplied")]
    NoTraces,
    #[error("traces do not share a common time grid")]
    MismatchedGrids,
    #[error("noise floor must lie in (0, 1), got {0}")]
    BadFloor(f64),
    #[error("design matrix is rank deficient at omega = {omega}, gamma = {gamma}")]
    RankDeficient { omega: f64, gamma: f64 },
    #[error("candidate parameters must be finite and non-negative (omega = {omega}, gamma = {gamma})")]
    BadCandidate { omega: f64, gamma: f64 },
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("stopping window must be at least 2 and tolerance positive")]
    BadStopRule,
}
