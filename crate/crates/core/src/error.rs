//! Errors shared by all toolkit modules.

use thiserror::Error;

/// Toolkit-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid control region: {0}")]
    InvalidRegion(String),

    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("invalid weight profile: {0}")]
    InvalidProfile(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("weights are singular at t = {t}: evaluation is restricted to interior times")]
    EndpointEvaluation { t: f64 },

    #[error("step matrix factorization failed at time step {step}")]
    FactorizationFailed { step: usize },

    #[error("inner iteration did not converge at time step {step} (residual {residual:.3e})")]
    InnerIterationStalled { step: usize, residual: f64 },

    #[error(
        "frozen coupling coefficient vanishes on the closed control region \
         (min |c~| = {min_abs:.3e}, required margin {margin:.3e})"
    )]
    CouplingVanishesOnOmega { min_abs: f64, margin: f64 },

    #[error("initial data too large: ||y0|| + ||z0|| = {norm:.3e} >= delta = {delta:.3e}")]
    SmallnessGate { norm: f64, delta: f64 },

    #[error("outer iteration diverged after {iterations} iterations")]
    PicardDiverged { iterations: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
