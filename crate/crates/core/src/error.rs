use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("moment vector of order {have} is too small, order {need} required")]
    OrderTooSmall { need: usize, have: usize },

    #[error("relaxation order {k} is below the minimal order {k0}")]
    OrderBelowMinimum { k: usize, k0: usize },

    #[error("invalid SDP instance: {0}")]
    InvalidInstance(String),

    #[error("atom extraction failed: {0}")]
    ExtractionFailed(String),

    #[error("certificate rejected: identity residual {residual:e} exceeds {tolerance:e}")]
    CertificateRejected { residual: f64, tolerance: f64 },

    #[error("weak duality violated: dual {dual} exceeds primal {primal}")]
    WeakDualityViolated { primal: f64, dual: f64 },

    #[error("solver returned status {0:?}, expected Optimal")]
    NotOptimal(crate::sdp::SolveStatus),

    #[error("sampling stalled: accepted {accepted} of {draws} draws; choose a box that overlaps the feasible set")]
    SamplingStalled { accepted: usize, draws: usize },

    #[error("no z sources: provide a sampling box with samples > 0 or a non-empty z list")]
    NoZSources,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
