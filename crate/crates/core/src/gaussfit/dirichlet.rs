//! Weighted matrix Dirichlet inequality
//! `∫φ′φ′ᵀ/℧_{μ,Σ} dx ⪰ (∫φ²/℧_{μ,Σ} dx) Σ⁻¹`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WeylError};
use crate::linalg::{self, Mat};
use crate::phase::gaussian::{GaussianDensity, GaussianState};
use crate::phase::grid::GridFunction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletReport {
    pub n: usize,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Extreme eigenvalues of `lhs − rhs`.
    pub min_gap: f64,
    pub max_gap: f64,
    /// Largest `|φ φ′| / ℧_{μ,Σ}` on the grid boundary.
    pub boundary: f64,
}

impl DirichletReport {
    /// `lhs − rhs` vanishes within `tol` (Gaussian φ up to scale).
    pub fn is_equality(&self, tol: f64) -> bool {
        self.min_gap.abs() <= tol && self.max_gap.abs() <= tol
    }
}

pub fn dirichlet_check(
    phi: &GridFunction,
    state: &GaussianState,
    accuracy: usize,
    tol_tail: f64,
) -> Result<DirichletReport> {
    let grid = &phi.grid;
    let n = grid.ndim();
    if state.n() != n {
        return Err(WeylError::Dimension("Gaussian and grid differ in dimension".into()));
    }
    let dens = GaussianDensity::new(state)?;
    let grad = phi.gradient(accuracy);
    let (sigma_inv, _) = linalg::cholesky_inverse(&state.sigma, "covariance Σ")?;
    let mut lhs = Mat::zeros(n, n);
    let mut weight = 0.0;
    let mut boundary: f64 = 0.0;
    for f in 0..grid.len() {
        let x = grid.point(f);
        let inv = (-dens.log_eval(&x)).exp();
        let v = phi.values[f].re;
        if grid.on_boundary(f) {
            let g = (0..n).map(|k| grad[k][f].re.abs()).fold(0.0, f64::max);
            boundary = boundary.max((v * g).abs() * inv);
        }
        let w = grid.trapezoid_weight(f) * inv;
        weight += w * v * v;
        for i in 0..n {
            for j in 0..n {
                lhs[(i, j)] += w * grad[i][f].re * grad[j][f].re;
            }
        }
    }
    if !(boundary <= tol_tail) {
        return Err(WeylError::Tail(format!(
            "|φφ′|/℧ reaches {boundary:.3e} on the grid boundary (tol_tail {tol_tail:.0e})"
        )));
    }
    let rhs = &sigma_inv * weight;
    let gap = linalg::symmetrize(&(&lhs - &rhs));
    Ok(DirichletReport {
        n,
        min_gap: linalg::min_eigenvalue_sym(&gap),
        max_gap: linalg::max_eigenvalue_sym(&gap),
        lhs: lhs.as_slice().to_vec(),
        rhs: rhs.as_slice().to_vec(),
        boundary,
    })
}
