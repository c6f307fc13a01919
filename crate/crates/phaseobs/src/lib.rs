//! Numerical kernels for phase-space observables generated by a number state:
//! outcome densities, POVM elements over plane regions, moment operators,
//! position/momentum/polar margins and moment-determinacy diagnostics.
//!
//! Conventions used throughout:
//! - ladder action `a|n> = sqrt(n)|n-1>`, `a*|n> = sqrt(n+1)|n+1>`;
//! - outcome densities carry the plane measure `dlambda(z)/pi`;
//! - quadrature rules are stated in the plain-integral convention: the
//!   integrand carries its own weight (Gaussian, exponential), the rule's
//!   weights already absorb the classical weight function.

pub mod cli;
pub mod margins;
pub mod moments;
pub mod povm;
pub mod quadrature;
pub mod specfun;
pub mod verify;

use thiserror::Error;

/// Crate-wide error type. Variants map onto CLI exit codes: configuration
/// and domain problems exit 2, numerical failures exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow guard: {0}")]
    Overflow(String),

    #[error("moment order {requested} exceeds limit {max}")]
    OrderLimit { requested: usize, max: usize },

    #[error("grid measure has no declared tail envelope on axis {axis}; exponential integrability is undecidable")]
    UndecidableTail { axis: usize },

    #[error("momentum margin requires a Fock-basis wavefunction; grid representation carries no phase convention")]
    FockBasisRequired,

    #[error("non-finite integrand value at node {index} (z = {re} + {im}i)")]
    NonFiniteNode { index: usize, re: f64, im: f64 },

    #[error("sampler envelope violated: density/proposal ratio {ratio} exceeds bound {bound} at z = {re} + {im}i")]
    EnvelopeViolation {
        ratio: f64,
        bound: f64,
        re: f64,
        im: f64,
    },

    #[error("diagonal polynomial mismatch at k = {k}: fit predicts {predicted}, operator gives {actual}")]
    PolynomialMismatch {
        k: usize,
        predicted: f64,
        actual: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI uses for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteNode { .. }
            | Error::EnvelopeViolation { .. }
            | Error::PolynomialMismatch { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
