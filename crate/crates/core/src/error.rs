use thiserror::Error;

/// Errors produced by the numerical toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("Hurst parameter H = {0} outside (1/2, 1)")]
    HurstOutOfRange(f64),
    #[error("kernel prefactor s^(1/2-H) diverges at s = 0 with l = {0} > 0")]
    KernelAtZero(f64),
    #[error("kernel derivative requested at u = {u} <= s = {s}")]
    KernelDerivativeDomain { u: f64, s: f64 },
    #[error("grid too coarse: {0} points, need at least {1}")]
    GridTooCoarse(usize, usize),
    #[error("statistical test refused: {got} paths, need at least {need}")]
    InsufficientPaths { got: usize, need: usize },
    #[error("empty sample: {0}")]
    EmptySample(&'static str),
    #[error("exact subdifferential unsupported for generic functions; use directional_derivative sampling")]
    GenericSubdifferential,
    #[error("divergent tail integral in weight T({0})")]
    DivergentTail(f64),
    #[error("segment time {tau} beyond path horizon {horizon}")]
    SegmentBeyondHorizon { tau: f64, horizon: f64 },
    #[error("no feasible (K, L) on the search grid; weight may violate the phase-space axioms")]
    NoFeasiblePhaseConstants,
    #[error("impulse schedule invalid: {0}")]
    InvalidSchedule(String),
    #[error("delay kernel integral diverges: {0}")]
    DivergentKernel(String),
    #[error("noise grid does not match solver grid: {0}")]
    GridMismatch(String),
    #[error("certification refused: {constant} = {value} >= 1")]
    ContractionViolated { constant: &'static str, value: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("selection infeasible: {0}")]
    SelectionInfeasible(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
