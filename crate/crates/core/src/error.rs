use thiserror::Error;

use crate::crystal::CrystalState;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no radial confinement: omega_r (omega_c - omega_r) must exceed omega_z^2 / 2 (beta = {beta:.4})")]
    RadialUnconfined { beta: f64 },

    #[error("rotation frequency {omega_r:.6e} rad/s is outside (0, omega_c = {omega_c:.6e} rad/s)")]
    RotationOutOfRange { omega_r: f64, omega_c: f64 },

    #[error("wall strength {delta} is not below beta = {beta:.4}, so the y direction is unconfined")]
    WallTooStrong { delta: f64, beta: f64 },

    #[error("beta is zero, the V4 to C4 relation is undefined")]
    BetaZero,

    #[error("ions {i} and {j} are coincident (separation {separation:.3e} l0)")]
    CoincidentIons { i: usize, j: usize, separation: f64 },

    #[error("minimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        best: Box<CrystalState>,
    },

    #[error("unstable equilibrium: {count} eigenvalues with relative imaginary part up to {max_ratio:.3e}")]
    UnstableEquilibrium { count: usize, max_ratio: f64 },

    #[error("mode {index} has zero frequency; a rotating wall (delta_wall > 0) is needed to pin the crystal")]
    ZeroFrequencyMode { index: usize },

    #[error("crystal is not a bilayer: found {clusters} separated z cluster(s)")]
    NotBilayer { clusters: usize },

    #[error("layer labels are missing from the crystal state")]
    MissingLayers,

    #[error("no solution for the requested phase in the search window")]
    NoSolutionInWindow,

    #[error("mode {index} is resonant with the drive (|detuning| = {detuning:.3e} rad/s)")]
    ResonantMode { index: usize, detuning: f64 },

    #[error("two-tone detunings differ in magnitude: {delta0:.6e} vs {delta1:.6e} rad/s")]
    DetuningMismatch { delta0: f64, delta1: f64 },

    #[error("mode {index} detuning {detuning:.3e} rad/s coincides with the transverse field")]
    ExchangeResonance { index: usize, detuning: f64 },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::RadialUnconfined { .. }
                | Error::RotationOutOfRange { .. }
                | Error::WallTooStrong { .. }
                | Error::BetaZero
                | Error::DetuningMismatch { .. }
                | Error::Shape(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
