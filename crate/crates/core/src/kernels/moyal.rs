//! Closed-form image of a Gaussian Wigner density under the Moyal integral
//! operator `𝔊(℧)(x) = −2 ∫ Π(x, v) ℧(x − ΘZᵀv) dv` of one potential term.

use num_complex::Complex64;

use crate::error::{Result, WeylError};
use crate::kernels::energy::GaussianPotentialTerm;
use crate::linalg::{self, Mat, Vector};
use crate::phase::gaussian::GaussianState;
use crate::phase::symplectic::SymplecticData;

/// `𝔊(℧_{μ,Σ})(x) = E exp(σᵀy − ½‖y‖²_α) sin(τᵀy − ½yᵀβy)` with `y = x − μ`.
#[derive(Debug, Clone)]
pub struct MoyalImage {
    pub mu: Vector,
    pub e: f64,
    pub s: Mat,
    pub alpha: Mat,
    pub beta: Mat,
    pub sigma: Vector,
    pub tau: Vector,
}

impl MoyalImage {
    pub fn new(state: &GaussianState, term: &GaussianPotentialTerm, sym: &SymplecticData) -> Result<Self> {
        let n = sym.n;
        term.validate(n)?;
        if state.n() != n {
            return Err(WeylError::Dimension("state and Θ differ in dimension".into()));
        }
        // a Gaussian centred at μ sees the potential centred at γ − Zμ
        let shifted = term.shifted(state.mu.as_slice());
        let d = term.d();
        let z = term.z_matrix(n);
        let lam = term.lambda_matrix();
        let (lam_inv, _) = linalg::cholesky_inverse(&lam, "potential shape Λ")?;
        let (sig_inv, det_sig) = linalg::cholesky_inverse(&state.sigma, "covariance Σ₀")?;
        let zt = &z * &sym.theta; // ZΘ
        let p = &zt * &sig_inv * zt.transpose() * -1.0; // ZΘΣ⁻¹ΘZᵀ (Θᵀ = −Θ)
        let s_inv = linalg::symmetrize(&(&lam_inv - &p));
        let (s, _) = linalg::cholesky_inverse(&s_inv, "S⁻¹ = Λ⁻¹ − ZΘΣ₀⁻¹ΘZᵀ")
            .map_err(|_| {
                WeylError::NotPositiveDefinite(format!(
                    "S-matrix condition Λ⁻¹ ≻ ZΘΣ₀⁻¹ΘZᵀ fails (min eigenvalue {:.3e})",
                    linalg::min_eigenvalue_sym(&s_inv)
                ))
            })?;
        let det_factor = (Mat::identity(d, d) - &lam * &p).determinant();
        if !(det_factor > 0.0) {
            return Err(WeylError::NotPositiveDefinite("det(I − ΛZΘΣ₀⁻¹ΘZᵀ) ≤ 0".into()));
        }
        let gamma = Vector::from_column_slice(&shifted.gamma);
        let e = 2.0 * term.c * (2.0 * std::f64::consts::PI).powf(-0.5 * n as f64)
            * (-0.5 * gamma.dot(&(&s * &gamma))).exp()
            / (det_sig * det_factor).sqrt();
        // Sherman–Morrison–Woodbury: (Σ₀ − ΘZᵀΛZΘ)⁻¹ = Σ₀⁻¹ + Σ₀⁻¹ΘZᵀ S ZΘΣ₀⁻¹
        let smw = &sig_inv + &sig_inv * zt.transpose() * -1.0 * &s * &zt * &sig_inv;
        let zsz = z.transpose() * &s * &z;
        let alpha = linalg::symmetrize(&(&smw + &zsz));
        let half = &zsz * &sym.theta * &sig_inv;
        let beta = linalg::symmetrize(&(&half + half.transpose()));
        let sigma = z.transpose() * &s * &gamma;
        let tau = &sig_inv * &sym.theta * z.transpose() * &s * &gamma * -1.0;
        Ok(Self {
            mu: state.mu.clone(),
            e,
            s,
            alpha,
            beta,
            sigma,
            tau,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().zip(self.mu.iter()).map(|(a, b)| a - b).collect();
        let amp = linalg::dot(self.sigma.as_slice(), &y) - 0.5 * linalg::quad_form(&self.alpha, &y);
        let arg = linalg::dot(self.tau.as_slice(), &y) - 0.5 * linalg::quad_form(&self.beta, &y);
        self.e * amp.exp() * arg.sin()
    }

    /// Complex quadratic form `Q = α + iβ` and linear term `σ + iτ`, so that
    /// the image equals `Im(E exp((σ+iτ)ᵀy − ½yᵀQy))`.
    pub fn complex_form(&self) -> (nalgebra::DMatrix<Complex64>, nalgebra::DVector<Complex64>) {
        let n = self.alpha.nrows();
        let q = nalgebra::DMatrix::from_fn(n, n, |i, j| Complex64::new(self.alpha[(i, j)], self.beta[(i, j)]));
        let l = nalgebra::DVector::from_fn(n, |i, _| Complex64::new(self.sigma[i], self.tau[i]));
        (q, l)
    }
}

/// Pointwise convenience wrapper around [`MoyalImage`].
pub fn moyal_image_of_gaussian(
    state: &GaussianState,
    term: &GaussianPotentialTerm,
    sym: &SymplecticData,
    x: &[f64],
) -> Result<f64> {
    Ok(MoyalImage::new(state, term, sym)?.eval(x))
}
