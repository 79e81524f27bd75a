//! Energy data: quadratic Hamiltonian, linear coupling and Gaussian-shaped
//! potential terms, plus the linear drift/dispersion they induce.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WeylError};
use crate::linalg::{self, Mat, Vector};
use crate::phase::symplectic::SymplecticData;

/// `φ(q) = −c exp(−½‖q − γ‖²_Λ)` acting on the coordinates `q = Z x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPotentialTerm {
    pub c: f64,
    pub gamma: Vec<f64>,
    /// Row-major `d×d` shape matrix.
    pub lambda: Vec<f64>,
    /// Axes selected by the rows of `Z`.
    pub axes: Vec<usize>,
}

impl GaussianPotentialTerm {
    pub fn new(c: f64, gamma: Vec<f64>, lambda: Mat, axes: Vec<usize>) -> Result<Self> {
        let t = Self {
            c,
            gamma,
            lambda: lambda.transpose().as_slice().to_vec(),
            axes,
        };
        t.validate(usize::MAX)?;
        Ok(t)
    }

    pub fn d(&self) -> usize {
        self.axes.len()
    }

    pub fn lambda_matrix(&self) -> Mat {
        let d = self.d();
        Mat::from_row_slice(d, d, &self.lambda)
    }

    /// The `d×n` selector `Z`.
    pub fn z_matrix(&self, n: usize) -> Mat {
        let mut z = Mat::zeros(self.d(), n);
        for (r, &k) in self.axes.iter().enumerate() {
            z[(r, k)] = 1.0;
        }
        z
    }

    /// `Zᵀ v`.
    pub fn lift(&self, v: &[f64], n: usize) -> Vec<f64> {
        let mut s = vec![0.0; n];
        for (r, &k) in self.axes.iter().enumerate() {
            s[k] += v[r];
        }
        s
    }

    /// `Z x`.
    pub fn select(&self, x: &[f64]) -> Vec<f64> {
        self.axes.iter().map(|&k| x[k]).collect()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let d = self.d();
        if d == 0 {
            return Err(WeylError::InvalidInput("potential term selects no axes".into()));
        }
        if !(self.c > 0.0) {
            return Err(WeylError::InvalidInput(format!(
                "potential depth c must be positive, got {}",
                self.c
            )));
        }
        if self.gamma.len() != d || self.lambda.len() != d * d {
            return Err(WeylError::Dimension(format!(
                "potential term with d = {d} needs γ of length {d} and Λ of size {d}x{d}"
            )));
        }
        let mut seen = self.axes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != d || seen.iter().any(|&k| k >= n) {
            return Err(WeylError::InvalidInput(
                "selector axes must be distinct and below n (ZZᵀ = I)".into(),
            ));
        }
        let lam = self.lambda_matrix();
        if linalg::symmetry_residual(&lam) > 1e-12 * linalg::max_abs(&lam) {
            return Err(WeylError::InvalidInput("Λ must be symmetric".into()));
        }
        if linalg::min_eigenvalue_sym(&lam) <= 0.0 {
            return Err(WeylError::NotPositiveDefinite("potential shape Λ".into()));
        }
        Ok(())
    }

    pub fn prepare(&self) -> PreparedTerm {
        let lam = self.lambda_matrix();
        let (lambda_inv, det) = linalg::cholesky_inverse(&lam, "potential shape Λ")
            .expect("validated potential term");
        let d = self.d() as f64;
        PreparedTerm {
            term: self.clone(),
            lambda_inv,
            amplitude: self.c * (2.0 * std::f64::consts::PI).powf(-0.5 * d) / det.sqrt(),
        }
    }

    pub fn potential(&self, q: &[f64]) -> f64 {
        let dq: Vec<f64> = q.iter().zip(&self.gamma).map(|(a, b)| a - b).collect();
        -self.c * (-0.5 * linalg::quad_form(&self.lambda_matrix(), &dq)).exp()
    }

    /// Same term with the centre moved to `γ − Z μ`.
    pub fn shifted(&self, mu: &[f64]) -> Self {
        let mut t = self.clone();
        for (r, &k) in self.axes.iter().enumerate() {
            t.gamma[r] -= mu[k];
        }
        t
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut t = self.clone();
        t.c *= factor;
        t
    }
}

/// Potential term with `Λ⁻¹` and the Fourier amplitude cached.
#[derive(Debug, Clone)]
pub struct PreparedTerm {
    pub term: GaussianPotentialTerm,
    pub lambda_inv: Mat,
    /// `c (2π)^{-d/2} det(Λ)^{-1/2}`.
    pub amplitude: f64,
}

impl PreparedTerm {
    /// Gaussian weight `exp(−½‖v‖²_{Λ⁻¹})`.
    pub fn envelope(&self, v: &[f64]) -> f64 {
        (-0.5 * linalg::quad_form(&self.lambda_inv, v)).exp()
    }

    /// `H̃₀(v) = −c (2π)^{-d/2} det(Λ)^{-1/2} exp(−i vᵀγ − ½‖v‖²_{Λ⁻¹})`.
    pub fn h0(&self, v: &[f64]) -> Complex64 {
        self.h0_over_envelope(v) * self.envelope(v)
    }

    /// `H̃₀(v)` with the Gaussian weight removed (for whitened quadrature).
    pub fn h0_over_envelope(&self, v: &[f64]) -> Complex64 {
        let phase = linalg::dot(v, &self.term.gamma);
        Complex64::from_polar(-self.amplitude, -phase)
    }
}

/// Hamiltonian `bᵀX + ½XᵀRX + Σ φ_k(Z_k X)` with coupling `h = N X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySpec {
    pub b: Vec<f64>,
    /// Row-major `n×n`.
    pub r: Vec<f64>,
    /// Row-major `m×n`.
    pub n_coupling: Vec<f64>,
    pub potential_terms: Vec<GaussianPotentialTerm>,
}

impl EnergySpec {
    pub fn new(b: Vector, r: Mat, n_coupling: Mat, potential_terms: Vec<GaussianPotentialTerm>) -> Self {
        Self {
            b: b.as_slice().to_vec(),
            r: r.transpose().as_slice().to_vec(),
            n_coupling: n_coupling.transpose().as_slice().to_vec(),
            potential_terms,
        }
    }

    pub fn n(&self) -> usize {
        self.b.len()
    }

    pub fn m(&self) -> usize {
        if self.b.is_empty() {
            0
        } else {
            self.n_coupling.len() / self.b.len()
        }
    }

    pub fn b_vector(&self) -> Vector {
        Vector::from_column_slice(&self.b)
    }

    pub fn r_matrix(&self) -> Mat {
        Mat::from_row_slice(self.n(), self.n(), &self.r)
    }

    pub fn n_matrix(&self) -> Mat {
        Mat::from_row_slice(self.m(), self.n(), &self.n_coupling)
    }

    pub fn has_potential(&self) -> bool {
        !self.potential_terms.is_empty()
    }

    pub fn without_potential(&self) -> Self {
        let mut s = self.clone();
        s.potential_terms.clear();
        s
    }

    pub fn validate(&self, sym: &SymplecticData) -> Result<()> {
        let n = self.n();
        if n != sym.n {
            return Err(WeylError::Dimension(format!(
                "energy data has n = {n} but Θ is {}x{}",
                sym.n, sym.n
            )));
        }
        if self.r.len() != n * n {
            return Err(WeylError::Dimension(format!("R must be {n}x{n}")));
        }
        if self.n_coupling.len() != sym.m * n {
            return Err(WeylError::Dimension(format!(
                "N must be {}x{n} to match the field dimension",
                sym.m
            )));
        }
        let r = self.r_matrix();
        if linalg::symmetry_residual(&r) > 1e-12 * linalg::max_abs(&r).max(1.0) {
            return Err(WeylError::InvalidInput("R must be symmetric".into()));
        }
        for t in &self.potential_terms {
            t.validate(n)?;
        }
        Ok(())
    }

    /// Classical energy `bᵀx + ½xᵀRx + Σ φ_k(Z_k x)`.
    pub fn hamiltonian(&self, x: &[f64]) -> f64 {
        let r = self.r_matrix();
        linalg::dot(&self.b, x)
            + 0.5 * linalg::quad_form(&r, x)
            + self
                .potential_terms
                .iter()
                .map(|t| t.potential(&t.select(x)))
                .sum::<f64>()
    }
}

/// Coefficients of `dX = (AX + 2Θb)dt + B dW`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: Mat,
    pub b_disp: Mat,
    pub drift_const: Vector,
}

impl LinearDynamics {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn diffusion(&self) -> Mat {
        &self.b_disp * self.b_disp.transpose()
    }

    pub fn spectral_abscissa(&self) -> f64 {
        linalg::spectral_abscissa(&self.a)
    }

    pub fn is_hurwitz(&self) -> bool {
        self.spectral_abscissa() < 0.0
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let ax = linalg::mat_vec(&self.a, x);
        ax.iter().zip(self.drift_const.iter()).map(|(a, c)| a + c).collect()
    }
}

/// `A = 2Θ(R + NᵀJN)`, `B = 2ΘNᵀ`, drift constant `2Θb`.
pub fn compute_linear_dynamics(spec: &EnergySpec, sym: &SymplecticData) -> Result<LinearDynamics> {
    spec.validate(sym)?;
    let n = spec.n_matrix();
    let two_theta = &sym.theta * 2.0;
    let a = &two_theta * (spec.r_matrix() + n.transpose() * &sym.j_field * &n);
    let b_disp = &two_theta * n.transpose();
    let drift_const = &two_theta * spec.b_vector();
    Ok(LinearDynamics {
        a,
        b_disp,
        drift_const,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym2() -> SymplecticData {
        SymplecticData::standard(2, 2).unwrap()
    }

    #[test]
    fn uncoupled_dynamics() {
        let spec = EnergySpec::new(
            Vector::zeros(2),
            Mat::identity(2, 2),
            Mat::zeros(2, 2),
            vec![],
        );
        let dyn_ = compute_linear_dynamics(&spec, &sym2()).unwrap();
        assert_eq!(dyn_.b_disp, Mat::zeros(2, 2));
        assert_eq!(dyn_.a, linalg::symplectic_unit(2));
        assert_eq!(dyn_.drift_const, Vector::zeros(2));
    }

    #[test]
    fn coupled_dynamics_against_dense_arithmetic() {
        let sym = sym2();
        let spec = EnergySpec::new(
            Vector::from_vec(vec![0.3, -0.1]),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            vec![],
        );
        let d = compute_linear_dynamics(&spec, &sym).unwrap();
        // Θ = ½J, N = I: A = J(I + J) = J + J² = J − I
        let j = linalg::symplectic_unit(2);
        let expect = &j - Mat::identity(2, 2);
        assert!((&d.a - &expect).abs().max() < 1e-15);
        assert!((&d.b_disp - &j).abs().max() < 1e-15);
        let tinv = sym.theta_inverse().unwrap();
        let alt = &sym.theta * 2.0 * spec.r_matrix()
            - &d.b_disp * &sym.j_field * d.b_disp.transpose() * &tinv * 0.5;
        assert!((&d.a - alt).abs().max() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let spec = EnergySpec::new(Vector::zeros(4), Mat::identity(4, 4), Mat::zeros(2, 4), vec![]);
        assert!(matches!(
            compute_linear_dynamics(&spec, &sym2()),
            Err(WeylError::Dimension(_))
        ));
    }

    #[test]
    fn h0_is_hermitian() {
        let t = GaussianPotentialTerm::new(
            1.5,
            vec![2.0, 3.0],
            Mat::from_row_slice(2, 2, &[6.0, 1.0, 1.0, 4.0]),
            vec![0, 1],
        )
        .unwrap()
        .prepare();
        let v = [0.4, -1.3];
        let w = [-0.4, 1.3];
        assert!((t.h0(&v) - t.h0(&w).conj()).norm() < 1e-16);
    }

    #[test]
    fn rejects_bad_terms() {
        let lam = Mat::identity(1, 1);
        assert!(GaussianPotentialTerm::new(-1.0, vec![0.0], lam.clone(), vec![0]).is_err());
        assert!(GaussianPotentialTerm::new(1.0, vec![0.0], -lam, vec![0]).is_err());
        let t = GaussianPotentialTerm::new(1.0, vec![0.0], Mat::identity(1, 1), vec![3]).unwrap();
        assert!(t.validate(2).is_err());
    }
}
