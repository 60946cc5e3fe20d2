use thiserror::Error;

use crate::stability::StabilityReport;

/// Errors raised by the tensor, field and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tensor violates A[a,b,i,j] = A[b,a,j,i]: max asymmetry {0:e}")]
    AsymmetricTensor(f64),

    #[error("hessian argument is not symmetric in (i, j): max asymmetry {0:e}")]
    AsymmetricHessian(f64),

    #[error("degenerate symbol at z = {z:?}: |det| = {det:e} below floor {floor:e}")]
    DegenerateSymbol { z: Vec<f64>, det: f64, floor: f64 },

    #[error("field is in {found} representation, expected {expected}")]
    Representation {
        expected: &'static str,
        found: &'static str,
    },

    #[error("grid needs {needed} bytes, budget is {budget} bytes")]
    MemoryBudget { needed: u128, budget: u128 },

    #[error("nonlinearity returned a non-finite value at grid point {point}")]
    NonFinite { point: usize },

    #[error("certificate is infeasible: beta + gamma = {0} (must be < 1 with beta, gamma > 0)")]
    InfeasibleCertificate(f64),

    #[error(
        "contraction ratio exceeded 1 for {consecutive} consecutive iterations (last {last_ratio:.4}); \
         the K-condition certificate (beta = {beta:e}, gamma = {gamma:e}) does not hold for this problem"
    )]
    Diverged {
        consecutive: usize,
        last_ratio: f64,
        beta: f64,
        gamma: f64,
    },

    #[error("hessian estimate breached: A:D2u vanishes while D2u does not")]
    EstimateBreach,

    #[error(
        "nearness condition not met: nu(F,G) = {:e} >= lower bound nu(F) = {:e}",
        .0.nu_fg,
        .0.nu_f_lower
    )]
    NearnessViolated(Box<StabilityReport>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
