//! χ²-divergence of a QPDF from a Gaussian reference density and its
//! parameter gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WeylError};
use crate::linalg::{self, Mat, Vector};
use crate::phase::gaussian::{GaussianDensity, GaussianState};
use crate::phase::grid::GridFunction;

/// `D = ∫℧²/℧_ref dx − 1` and the second-order Rényi relative entropy
/// `ln(D + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2 {
    pub divergence: f64,
    pub renyi: f64,
}

/// Trapezoid moments of `r = ℧²/℧_ref`: `∫r`, `∫r x`, `∫r xxᵀ`.
#[derive(Debug, Clone)]
pub struct RatioMoments {
    pub m0: f64,
    pub m1: Vector,
    pub m2: Mat,
    pub reference: GaussianState,
}

impl RatioMoments {
    pub fn compute(mho: &GridFunction, reference: &GaussianState, tol_tail: f64) -> Result<Self> {
        let grid = &mho.grid;
        let n = grid.ndim();
        if reference.n() != n {
            return Err(WeylError::Dimension("reference Gaussian and grid differ in dimension".into()));
        }
        let dens = GaussianDensity::new(reference)?;
        let ratio = |flat: usize, x: &[f64]| -> f64 {
            let v = mho.values[flat].re;
            if v == 0.0 {
                0.0
            } else {
                (2.0 * v.abs().ln() - dens.log_eval(x)).exp()
            }
        };
        let edge = (0..grid.len())
            .into_par_iter()
            .filter(|&f| grid.on_boundary(f))
            .map(|f| ratio(f, &grid.point(f)))
            .reduce(|| 0.0, f64::max);
        if !(edge <= tol_tail) {
            return Err(WeylError::Tail(format!(
                "℧²/℧_ref reaches {edge:.3e} on the grid boundary (tol_tail {tol_tail:.0e}); widen the reference or the grid"
            )));
        }
        let zero = || (0.0, vec![0.0; n], vec![0.0; n * n]);
        let (m0, m1, m2) = (0..grid.len())
            .into_par_iter()
            .fold(zero, |(mut a0, mut a1, mut a2), f| {
                let x = grid.point(f);
                let r = ratio(f, &x) * grid.trapezoid_weight(f);
                a0 += r;
                for i in 0..n {
                    a1[i] += r * x[i];
                    for j in 0..n {
                        a2[i * n + j] += r * x[i] * x[j];
                    }
                }
                (a0, a1, a2)
            })
            .reduce(zero, |(a0, a1, a2), (b0, b1, b2)| {
                (
                    a0 + b0,
                    a1.iter().zip(&b1).map(|(p, q)| p + q).collect(),
                    a2.iter().zip(&b2).map(|(p, q)| p + q).collect(),
                )
            });
        Ok(Self {
            m0,
            m1: Vector::from_vec(m1),
            m2: Mat::from_row_slice(n, n, &m2),
            reference: reference.clone(),
        })
    }

    pub fn chi2(&self) -> Chi2 {
        Chi2 {
            divergence: self.m0 - 1.0,
            renyi: self.m0.ln(),
        }
    }

    /// `∫r (x−μ)(x−μ)ᵀ dx`.
    fn centred_second(&self) -> Mat {
        let mu = &self.reference.mu;
        &self.m2 - &self.m1 * mu.transpose() - mu * self.m1.transpose() + mu * mu.transpose() * self.m0
    }

    /// `(∂_μD, ∂_ΣD)`.
    pub fn gradients(&self) -> Result<(Vector, Mat)> {
        let (sinv, _) = linalg::cholesky_inverse(&self.reference.sigma, "reference covariance")?;
        let g_mu = &sinv * (&self.reference.mu * self.m0 - &self.m1);
        let inner = &self.reference.sigma * self.m0 - self.centred_second();
        let g_sigma = linalg::symmetrize(&(&sinv * inner * &sinv * 0.5));
        Ok((g_mu, g_sigma))
    }

    /// Mean and covariance of the auxiliary density `p = ℧²/((1+D)℧_ref)`.
    pub fn auxiliary_moments(&self) -> (Vector, Mat) {
        let mean = &self.m1 / self.m0;
        let cov = linalg::symmetrize(&(&self.m2 / self.m0 - &mean * mean.transpose()));
        (mean, cov)
    }
}

pub fn chi2_divergence(mho: &GridFunction, reference: &GaussianState, tol_tail: f64) -> Result<Chi2> {
    Ok(RatioMoments::compute(mho, reference, tol_tail)?.chi2())
}

pub fn chi2_gradients(mho: &GridFunction, reference: &GaussianState, tol_tail: f64) -> Result<(Vector, Mat)> {
    RatioMoments::compute(mho, reference, tol_tail)?.gradients()
}

/// Trapezoid mean and covariance of a (possibly signed) density on its grid.
pub fn grid_moments(mho: &GridFunction) -> (f64, Vector, Mat) {
    let grid = &mho.grid;
    let n = grid.ndim();
    let mut m0 = 0.0;
    let mut m1 = Vector::zeros(n);
    let mut m2 = Mat::zeros(n, n);
    for f in 0..grid.len() {
        let x = Vector::from_vec(grid.point(f));
        let w = grid.trapezoid_weight(f) * mho.values[f].re;
        m0 += w;
        m1 += &x * w;
        m2 += &x * x.transpose() * w;
    }
    let mean = &m1 / m0;
    let cov = linalg::symmetrize(&(&m2 / m0 - &mean * mean.transpose()));
    (m0, mean, cov)
}

/// Reference-width rule: along each eigendirection `e` of `Σ_ref` the
/// variance must be at least half of `eᵀ C e`, with `C` the covariance of
/// `℧`, for `℧²/℧_ref` to stay integrable.
pub fn reference_wide_enough(reference: &GaussianState, mho_cov: &Mat) -> bool {
    let eig = nalgebra::SymmetricEigen::new(reference.sigma.clone());
    (0..eig.eigenvalues.len()).all(|k| {
        let e = eig.eigenvectors.column(k);
        let c = (e.transpose() * mho_cov * e)[(0, 0)];
        eig.eigenvalues[k] >= 0.5 * c
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vanishes_at_the_reference() {
        let g = Grid::cube(2, 97, 9.0).unwrap();
        let st = GaussianState::new(Vector::from_vec(vec![0.3, -0.2]), Mat::from_row_slice(2, 2, &[1.1, 0.3, 0.3, 0.8])).unwrap();
        let mho = st.sample_qpdf(&g).unwrap();
        let m = RatioMoments::compute(&mho, &st, 1e-8).unwrap();
        assert!(m.chi2().divergence.abs() < 1e-6);
        let (gm, gs) = m.gradients().unwrap();
        assert!(gm.amax() < 1e-8 && gs.amax() < 1e-8);
    }

    /// Centred Gaussians: `D + 1 = |Σ_r|^{1/2} |S|^{-1} |P|^{-1/2}`, `P = 2S⁻¹ − Σ_r⁻¹`.
    #[test]
    fn wide_gaussian_against_closed_form() {
        let g = Grid::cube(2, 161, 12.0).unwrap();
        let mho = GaussianState::centered(Mat::identity(2, 2) * 2.0).unwrap().sample_qpdf(&g).unwrap();
        let reference = GaussianState::centered(Mat::identity(2, 2) * 1.5).unwrap();
        let d = chi2_divergence(&mho, &reference, 1e-8).unwrap();
        let p = 2.0 / 2.0 - 1.0 / 1.5;
        let exact = 1.5 / (4.0 * p) - 1.0;
        assert!((d.divergence - exact).abs() < 1e-9, "{} {exact}", d.divergence);
        assert!((d.renyi - (exact + 1.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn narrow_reference_is_a_tail_error() {
        let g = Grid::cube(2, 65, 8.0).unwrap();
        let mho = GaussianState::centered(Mat::identity(2, 2) * 2.0).unwrap().sample_qpdf(&g).unwrap();
        // Σ_ref = ½·2I is the borderline case: ℧²/℧_ref is constant and D = ∞.
        for s in [0.5, 1.0] {
            let reference = GaussianState::centered(Mat::identity(2, 2) * s).unwrap();
            assert!(matches!(chi2_divergence(&mho, &reference, 1e-8), Err(WeylError::Tail(_))));
        }
        let reference = GaussianState::centered(Mat::identity(2, 2) * 0.5).unwrap();
        assert!(!reference_wide_enough(&reference, &(Mat::identity(2, 2) * 2.0)));
    }

    #[test]
    fn divergence_is_nonnegative_for_perturbed_densities() {
        let g = Grid::cube(2, 81, 9.0).unwrap();
        let reference = GaussianState::centered(Mat::identity(2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (a, b, c): (f64, f64, f64) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.1..0.1));
            let base = GaussianState::centered(Mat::identity(2, 2) * 0.9).unwrap();
            let raw = GridFunction::from_fn(g.clone(), crate::phase::grid::GridKind::Qpdf, |x| {
                let v = base.qpdf(x).unwrap() * (1.0 + a * x[0] + b * x[1] + c * (x[0] * x[1] - x[0] * x[0]));
                num_complex::Complex64::new(v, 0.0)
            });
            let mass = raw.integral().re;
            let mho = raw.scale(1.0 / mass);
            assert!(chi2_divergence(&mho, &reference, 1e-8).unwrap().divergence >= 0.0);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let g = Grid::cube(2, 97, 10.0).unwrap();
        let target = GaussianState::new(Vector::from_vec(vec![0.2, -0.1]), Mat::from_row_slice(2, 2, &[0.9, 0.2, 0.2, 0.7])).unwrap();
        let mho = GridFunction::from_fn(g.clone(), crate::phase::grid::GridKind::Qpdf, |x| {
            num_complex::Complex64::new(target.qpdf(x).unwrap() * (1.0 + 0.1 * x[0] * x[1]), 0.0)
        });
        let reference = GaussianState::new(Vector::from_vec(vec![0.1, 0.1]), Mat::from_row_slice(2, 2, &[1.2, 0.1, 0.1, 1.0])).unwrap();
        let (gm, gs) = chi2_gradients(&mho, &reference, 1e-8).unwrap();
        let h = 1e-4;
        let d = |r: &GaussianState| chi2_divergence(&mho, r, 1e-8).unwrap().divergence;
        for i in 0..2 {
            let mut p = reference.clone();
            let mut m = reference.clone();
            p.mu[i] += h;
            m.mu[i] -= h;
            let fd = (d(&p) - d(&m)) / (2.0 * h);
            assert!((fd - gm[i]).abs() < 1e-5, "μ{i}: {fd} vs {}", gm[i]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let e01 = rng.random_range(-1.0..1.0);
            let dir = Mat::from_row_slice(2, 2, &[rng.random_range(-1.0..1.0), e01, e01, rng.random_range(-1.0..1.0)]);
            let p = GaussianState::new(reference.mu.clone(), &reference.sigma + &dir * h).unwrap();
            let m = GaussianState::new(reference.mu.clone(), &reference.sigma - &dir * h).unwrap();
            let fd = (d(&p) - d(&m)) / (2.0 * h);
            let an = gs.component_mul(&dir).sum();
            assert!((fd - an).abs() < 1e-5, "Σ: {fd} vs {an}");
        }
    }
}
