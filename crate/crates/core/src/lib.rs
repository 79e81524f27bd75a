//! Phase-space dynamics of open quantum stochastic systems whose energy
//! operators are Weyl quantized: quasi-characteristic functions, Wigner
//! densities, invariant states and Gaussian fits.

pub mod classiclimit;
pub mod dynamics;
pub mod error;
pub mod gaussfit;
pub mod invariant;
pub mod kernels;
pub mod linalg;
pub mod phase;
pub mod quadrature;
pub mod stencil;

pub use error::{Result, WeylError};

/// Numerical tolerances shared by the checks throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub sym: f64,
    pub norm: f64,
    pub fft: f64,
    pub psd: f64,
    pub tail: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sym: 1e-10,
            norm: 1e-6,
            fft: 1e-8,
            psd: 1e-10,
            tail: 1e-8,
        }
    }
}
