use thiserror::Error;

use crate::spectral::StabilityReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("feedback loop is degenerate: I - loop gain is singular (eta_s = {eta_s}, phi_s = {phi_s})")]
    DegenerateLoop { eta_s: f64, phi_s: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("model is unstable ({} right-half-plane zeros, neutral condition {})", .0.winding_number, if .0.neutral_ok { "ok" } else { "violated" })]
    Unstable(StabilityReport),

    #[error("stability verdict is marginal: characteristic function {value:.3e} at omega = {omega:.6e} rad/s")]
    Marginal { omega: f64, value: f64 },

    #[error("transfer matrix is singular at omega = {omega:.6e} rad/s")]
    SingularResponse { omega: f64 },

    #[error("quadrature did not converge: achieved relative error {achieved:.3e} after {panels} panels")]
    QuadratureNonConvergence { achieved: f64, panels: usize },

    #[error("state is unphysical in stage `{stage}`: min eigenvalue of sigma + iJ is {min_eigenvalue:.3e}")]
    Unphysical { stage: String, min_eigenvalue: f64 },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("effective mapping is outside its range of validity: {0}")]
    OutOfValidity(String),

    #[error("no feasible start: {0}")]
    Infeasible(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
