use thiserror::Error;

use crate::constrained::QpSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("evaluation point {t} lies outside the estimation region [{h}, 1 - {h}]")]
    Boundary { t: f64, h: f64 },

    #[error("bandwidth {h} leaves fewer than two samples in the window around t = {t}")]
    DegenerateBandwidth { h: f64, t: f64 },

    #[error("kernel order {0} is not supported (maximum 4)")]
    UnsupportedOrder(usize),

    #[error("argument {0} is outside the function domain")]
    Domain(f64),

    #[error("change point at {x} has vanishing next derivative")]
    Nongeneric { x: f64 },

    #[error("scaling assumption violated: {0}")]
    ScalingAssumption(String),

    #[error("corrected uncertainty level {0} is not below one")]
    DegenerateQuantile(f64),

    #[error("evaluation grid spacing {spacing} is too coarse for bandwidth {h}")]
    Resolution { spacing: f64, h: f64 },

    #[error("linear system is singular or badly conditioned: {0}")]
    Conditioning(String),

    #[error("active-set iteration cap {cap} exceeded")]
    NonConvergence { cap: usize, best: Box<QpSolution> },

    #[error("active set repeated after the Bland fallback")]
    Cycling,

    #[error("constraint set is infeasible")]
    Infeasible,

    #[error("unknown test function `{0}`")]
    UnknownTruth(String),

    #[error("every smoothing parameter on the grid was excluded (p >= N)")]
    NoAdmissibleLambda,
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
