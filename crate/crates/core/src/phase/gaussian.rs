//! Gaussian quantum states: QCF and Wigner density in closed form.

use num_complex::Complex64;

use crate::error::{Result, WeylError};
use crate::linalg::{self, Mat, Vector};
use crate::phase::grid::{Grid, GridFunction, GridKind};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mu: Vector,
    pub sigma: Mat,
}

impl GaussianState {
    pub fn new(mu: Vector, sigma: Mat) -> Result<Self> {
        let n = mu.len();
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(WeylError::Dimension(format!(
                "mean has length {n} but covariance is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if linalg::symmetry_residual(&sigma) > 1e-10 * linalg::max_abs(&sigma).max(1.0) {
            return Err(WeylError::InvalidInput("covariance must be symmetric".into()));
        }
        Ok(Self {
            mu,
            sigma: linalg::symmetrize(&sigma),
        })
    }

    pub fn centered(sigma: Mat) -> Result<Self> {
        Self::new(Vector::zeros(sigma.nrows()), sigma)
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    /// Smallest eigenvalue of `Σ + iΘ`; nonnegative for physical states.
    pub fn uncertainty_margin(&self, theta: &Mat) -> f64 {
        linalg::min_eigenvalue_hermitian(&self.sigma, theta)
    }

    pub fn satisfies_uncertainty(&self, theta: &Mat, tol_psd: f64) -> bool {
        self.uncertainty_margin(theta) >= -tol_psd
    }

    /// `exp(i μᵀu − ½ uᵀΣu)`.
    pub fn qcf(&self, u: &[f64]) -> Complex64 {
        let phase = linalg::dot(self.mu.as_slice(), u);
        let quad = linalg::quad_form(&self.sigma, u);
        Complex64::from_polar((-0.5 * quad).exp(), phase)
    }

    pub fn density(&self) -> Result<GaussianDensity> {
        GaussianDensity::new(self)
    }

    pub fn qpdf(&self, x: &[f64]) -> Result<f64> {
        Ok(self.density()?.eval(x))
    }

    pub fn sample_qcf(&self, grid: &Grid) -> GridFunction {
        GridFunction::from_fn(grid.clone(), GridKind::Qcf, |u| self.qcf(u))
    }

    pub fn sample_qpdf(&self, grid: &Grid) -> Result<GridFunction> {
        let d = self.density()?;
        Ok(GridFunction::from_fn(grid.clone(), GridKind::Qpdf, |x| {
            Complex64::new(d.eval(x), 0.0)
        }))
    }
}

/// Normal density with the inverse covariance factored once.
#[derive(Debug, Clone)]
pub struct GaussianDensity {
    pub mu: Vector,
    pub sigma_inv: Mat,
    pub log_norm: f64,
}

impl GaussianDensity {
    pub fn new(state: &GaussianState) -> Result<Self> {
        let (sigma_inv, det) = linalg::cholesky_inverse(&state.sigma, "covariance Σ")?;
        let n = state.n() as f64;
        let log_norm = -0.5 * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
        Ok(Self {
            mu: state.mu.clone(),
            sigma_inv,
            log_norm,
        })
    }

    pub fn log_eval(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(self.mu.iter()).map(|(a, b)| a - b).collect();
        self.log_norm - 0.5 * linalg::quad_form(&self.sigma_inv, &d)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.log_eval(x).exp()
    }
}
