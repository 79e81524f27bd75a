//! Phase-space primitives: commutation data, grids, Gaussian states,
//! Ψ polynomials, moments and the QCF/QPDF Fourier pair.

pub mod fourier;
pub mod gaussian;
pub mod grid;
pub mod io;
pub mod moments;
pub mod psi;
pub mod symplectic;

pub use gaussian::{GaussianDensity, GaussianState};
pub use grid::{Boundary, Grid, GridFunction, GridKind, Interpolation, ShiftStencil};
pub use psi::{psi_polynomial, MultiIndex, Polynomial};
pub use symplectic::{SymplecticData, TildeTheta};
