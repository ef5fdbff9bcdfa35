use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("contour intersects spectrum (min distance {min_dist:.3e}, radius {radius:.3e})")]
    ContourTooClose { min_dist: f64, radius: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("indeterminate rank: {0}")]
    IndeterminateRank(String),

    #[error("ambiguous classification: {0}")]
    AmbiguousClassification(String),

    #[error("spectral parameter too close to spectrum: {0}")]
    NearSpectrum(String),

    #[error("solve ill-conditioned (estimated condition {0:.3e})")]
    IllConditioned(f64),

    #[error("epsilon below growth rate: {0}")]
    EpsilonTooSmall(String),

    #[error("accuracy target unreachable: {0}")]
    AccuracyUnreachable(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("no divergence detected (fitted exponent {0:.3})")]
    NoDivergence(f64),

    #[error("ODE integration failure: {0}")]
    OdeFailure(String),

    #[error("regularization order underestimated: extrapolation still divergent")]
    OrderUnderestimated,

    #[error("reflection horizon exceeded: requested T={requested}, safe T_max={safe_max}")]
    ReflectionHorizon { requested: f64, safe_max: f64 },

    #[error("no such curve: {0}")]
    NoSuchCurve(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
