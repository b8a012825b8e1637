use thiserror::Error;

use crate::linalg::C64;

/// Errors raised by model construction, spectral solving and the
/// verification suites.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    Validation(String),

    #[error("jump transform evaluated at a pole (alpha = {0})")]
    Pole(C64),

    #[error("argument outside the admissible domain: {0}")]
    Domain(String),

    #[error("phase {phase} has a constant Lévy component")]
    Degenerate { phase: usize },

    #[error("linear system is numerically singular: {0}")]
    Singular(String),

    #[error("operation not supported for this model: {0}")]
    Unsupported(String),

    #[error("determinant roots {0} and {1} collide; spectrum is not semi-simple")]
    Multiplicity(C64, C64),

    #[error("expected {expected} determinant roots in the right half-plane, found {found}")]
    Count { expected: usize, found: usize },

    #[error("eigenvector basis is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("stationary drift condition violated: {0}")]
    Drift(String),

    #[error("evaluation point too close to a singularity: {0}")]
    NearSingular(String),

    #[error("phase {phase} has class {class}, expected {expected}")]
    Class {
        phase: usize,
        class: &'static str,
        expected: &'static str,
    },

    #[error("only {got} samples for {what}, need at least {needed}")]
    InsufficientSamples {
        what: String,
        got: usize,
        needed: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
