//! Commutation structure of system and field variables.

use num_complex::Complex64;
use nalgebra::DMatrix;

use crate::error::{Result, WeylError};
use crate::linalg::{self, Mat};

/// CCR matrix `Θ` of the system variables and the Ito matrix `Ω = I + iJ`
/// of the driving field.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticData {
    pub n: usize,
    pub theta: Mat,
    pub m: usize,
    pub j_field: Mat,
}

impl SymplecticData {
    /// `Θ = ½ J_n`, `J = J_m` with the canonical position/momentum ordering.
    pub fn standard(n: usize, m: usize) -> Result<Self> {
        Self::new(linalg::symplectic_unit(n) * 0.5, linalg::symplectic_unit(m))
    }

    /// Planck-scaled structure `Θ = (ħ/2) Ξ`, `J = (ħ/2) Υ`.
    pub fn scaled(xi: &Mat, ups: &Mat, hbar: f64) -> Result<Self> {
        if !(hbar > 0.0) {
            return Err(WeylError::InvalidInput("hbar must be positive".into()));
        }
        Self::new(xi * (0.5 * hbar), ups * (0.5 * hbar))
    }

    pub fn new(theta: Mat, j_field: Mat) -> Result<Self> {
        let n = theta.nrows();
        let m = j_field.nrows();
        if theta.ncols() != n || j_field.ncols() != m {
            return Err(WeylError::Dimension("Θ and J must be square".into()));
        }
        if n == 0 || n % 2 == 1 {
            return Err(WeylError::InvalidInput(format!(
                "dimension n is assumed to be even, got {n}"
            )));
        }
        if m == 0 || m % 2 == 1 {
            return Err(WeylError::InvalidInput(format!(
                "field dimension m is assumed to be even, got {m}"
            )));
        }
        let scale = linalg::max_abs(&theta).max(1.0);
        if linalg::antisymmetry_residual(&theta) > 1e-12 * scale {
            return Err(WeylError::InvalidInput("Θ must be antisymmetric".into()));
        }
        if linalg::antisymmetry_residual(&j_field) > 1e-12 * linalg::max_abs(&j_field).max(1.0) {
            return Err(WeylError::InvalidInput("J must be antisymmetric".into()));
        }
        let lo = linalg::min_eigenvalue_hermitian(&Mat::identity(m, m), &j_field);
        if lo < -1e-10 {
            return Err(WeylError::InvalidInput(format!(
                "Ito matrix I + iJ is not positive semi-definite (min eigenvalue {lo:.3e})"
            )));
        }
        Ok(Self {
            n,
            theta,
            m,
            j_field,
        })
    }

    pub fn omega(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.m, self.m, |i, j| {
            Complex64::new(if i == j { 1.0 } else { 0.0 }, self.j_field[(i, j)])
        })
    }

    pub fn tilde_theta(&self) -> TildeTheta {
        TildeTheta::from_theta(&self.theta)
    }

    pub fn theta_inverse(&self) -> Option<Mat> {
        self.theta.clone().try_inverse()
    }

    /// `uᵀ Θ v`.
    pub fn form(&self, u: &[f64], v: &[f64]) -> f64 {
        linalg::bilinear(&self.theta, u, v)
    }
}

/// Symmetric matrix inheriting the upper off-diagonal entries of `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TildeTheta {
    pub matrix: Mat,
}

impl TildeTheta {
    pub fn from_theta(theta: &Mat) -> Self {
        let n = theta.nrows();
        let matrix = Mat::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Less => theta[(i, j)],
            std::cmp::Ordering::Greater => theta[(j, i)],
            std::cmp::Ordering::Equal => 0.0,
        });
        Self { matrix }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            matrix: Mat::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// `uᵀ θ̃ u`.
    pub fn quad(&self, u: &[f64]) -> f64 {
        linalg::quad_form(&self.matrix, u)
    }
}
