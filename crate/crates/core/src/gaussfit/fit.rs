//! Optimal Gaussian approximation of a QPDF in the χ² sense.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WeylError};
use crate::gaussfit::chi2::{grid_moments, reference_wide_enough, RatioMoments};
use crate::linalg::{self, Mat, Vector};
use crate::phase::gaussian::GaussianState;
use crate::phase::grid::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub damping: f64,
    pub max_iter: usize,
    /// Stop when the largest parameter change drops below this.
    pub tol: f64,
    pub tol_tail: f64,
    pub tol_psd: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iter: 500,
            tol: 1e-8,
            tol_tail: 1e-8,
            tol_psd: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mu_star: Vec<f64>,
    pub sigma_star: Vec<f64>,
    pub n: usize,
    pub divergence: f64,
    pub renyi: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `Σ* + iΘ ⪰ 0`.
    pub uncertainty_ok: bool,
    pub uncertainty_margin: f64,
    /// Largest entry of `∂_μD`, `∂_ΣD` at the returned point.
    pub gradient_norm: f64,
    pub final_damping: f64,
}

impl FitResult {
    pub fn state(&self) -> Result<GaussianState> {
        GaussianState::new(
            Vector::from_column_slice(&self.mu_star),
            Mat::from_column_slice(self.n, self.n, &self.sigma_star),
        )
    }
}

const MAX_HALVINGS: usize = 5;

/// Damped fixed-point iteration `(μ, Σ) ← (1−λ)(μ, Σ) + λ(mean p, cov p)` with
/// `p = ℧²/((1+D)℧_{μ,Σ})`.
pub fn fit_gaussian(mho: &GridFunction, init: &GaussianState, theta: &Mat, opts: &FitOptions) -> Result<FitResult> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(WeylError::InvalidInput("damping must lie in (0, 1]".into()));
    }
    let (_, _, mho_cov) = grid_moments(mho);
    let mut lam = opts.damping;
    let mut halvings = 0;
    let mut cur = init.clone();
    let mut moments = RatioMoments::compute(mho, &cur, opts.tol_tail)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let (mean, cov) = moments.auxiliary_moments();
        let mu = &cur.mu * (1.0 - lam) + &mean * lam;
        let sigma = linalg::symmetrize(&(&cur.sigma * (1.0 - lam) + &cov * lam));
        let candidate = GaussianState::new(mu, sigma)
            .ok()
            .filter(|c| reference_wide_enough(c, &mho_cov))
            .map(|c| RatioMoments::compute(mho, &c, opts.tol_tail).map(|m| (c, m)));
        match candidate {
            Some(Ok((next, m))) => {
                let change = (&next.mu - &cur.mu).amax().max((&next.sigma - &cur.sigma).amax());
                cur = next;
                moments = m;
                if change < opts.tol {
                    converged = true;
                    break;
                }
            }
            _ => {
                if halvings == MAX_HALVINGS {
                    log::warn!("Gaussian fit: step rejected after {MAX_HALVINGS} damping halvings");
                    break;
                }
                halvings += 1;
                lam *= 0.5;
                log::debug!("Gaussian fit: covariance left the admissible set, damping → {lam}");
            }
        }
    }
    let chi = moments.chi2();
    let (gm, gs) = moments.gradients()?;
    let margin = cur.uncertainty_margin(theta);
    Ok(FitResult {
        mu_star: cur.mu.as_slice().to_vec(),
        sigma_star: cur.sigma.as_slice().to_vec(),
        n: cur.n(),
        divergence: chi.divergence,
        renyi: chi.renyi,
        iterations,
        converged,
        uncertainty_ok: margin >= -opts.tol_psd,
        uncertainty_margin: margin,
        gradient_norm: gm.amax().max(gs.amax()),
        final_damping: lam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::grid::Grid;
    use crate::phase::symplectic::SymplecticData;

    fn truth() -> GaussianState {
        GaussianState::new(
            Vector::from_vec(vec![0.4, -0.3]),
            Mat::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.9]),
        )
        .unwrap()
    }

    #[test]
    fn recovers_a_gaussian() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let g = Grid::cube(2, 129, 10.0).unwrap();
        let mho = truth().sample_qpdf(&g).unwrap();
        let init = GaussianState::new(Vector::from_vec(vec![0.0, 0.0]), Mat::identity(2, 2) * 1.1).unwrap();
        let r = fit_gaussian(&mho, &init, &sym.theta, &FitOptions::default()).unwrap();
        assert!(r.converged, "{r:?}");
        let st = r.state().unwrap();
        assert!((&st.mu - &truth().mu).amax() < 1e-8);
        assert!((&st.sigma - &truth().sigma).amax() < 1e-8);
        assert!(r.divergence.abs() < 1e-8);
        assert!(r.gradient_norm < 1e-6);
        assert!(r.uncertainty_ok);
    }

    #[test]
    fn far_initial_guess_still_converges() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let g = Grid::cube(2, 129, 12.0).unwrap();
        let mho = truth().sample_qpdf(&g).unwrap();
        let init = GaussianState::new(Vector::from_vec(vec![2.0, 1.5]), Mat::identity(2, 2) * 3.0).unwrap();
        let r = fit_gaussian(&mho, &init, &sym.theta, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!((&r.state().unwrap().sigma - &truth().sigma).amax() < 1e-7);
    }

    #[test]
    fn non_gaussian_fixed_point_has_zero_gradient() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let g = Grid::cube(2, 129, 10.0).unwrap();
        let t = truth();
        let mho = GridFunction::from_fn(g, crate::phase::grid::GridKind::Qpdf, |x| {
            num_complex::Complex64::new(t.qpdf(x).unwrap() * (1.0 + 0.15 * (x[0] - 0.4) * (x[1] + 0.3)), 0.0)
        });
        let r = fit_gaussian(&mho, &t, &sym.theta, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.gradient_norm < 1e-6, "{}", r.gradient_norm);
        assert!(r.divergence > 0.0);
    }
}
