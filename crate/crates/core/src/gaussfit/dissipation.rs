//! Dissipation relation for the χ²-divergence along QPDF trajectories.

use serde::{Deserialize, Serialize};

use crate::dynamics::evolve::Trajectory;
use crate::dynamics::rhs::{Rhs, RhsKind};
use crate::error::{Result, WeylError};
use crate::gaussfit::chi2::RatioMoments;
use crate::gaussfit::fit::{fit_gaussian, FitOptions};
use crate::linalg::{self, Mat};
use crate::phase::gaussian::{GaussianDensity, GaussianState};
use crate::phase::grid::GridFunction;

/// Reference Gaussian used at each snapshot.
#[derive(Debug, Clone)]
pub enum RefPath {
    Fixed(GaussianState),
    /// Refit `(μ*, Σ*)` at every snapshot, warm-started from the previous fit.
    Fitted { init: GaussianState, theta: Mat, opts: FitOptions },
}

/// Terms of `∂ₜD + (Aμ+c)ᵀ∂_μD + ⟨AΣ+ΣAᵀ+BBᵀ, ∂_ΣD⟩ + bracket = 2⟨℧/℧_ref, 𝔊℧⟩`
/// at the interior snapshots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Chi2DissipationReport {
    pub times: Vec<f64>,
    pub divergence: Vec<f64>,
    pub time_derivative: Vec<f64>,
    pub mu_transport: Vec<f64>,
    pub sigma_transport: Vec<f64>,
    /// `∫|Bᵀ∂ₓ℧|²/℧_ref − ⟨BBᵀ, Σ⁻¹⟩(D + 1)`, nonnegative.
    pub bracket: Vec<f64>,
    pub coupling: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_residual: f64,
    pub min_bracket: f64,
    /// Fitted path only: total derivative of the minimal divergence (central
    /// differences of the fitted values) and its bound `2⟨℧/℧*, 𝔊℧⟩`.
    pub min_total_derivative: Vec<f64>,
    pub min_inequality_ok: Option<bool>,
}

struct SnapshotTerms {
    d: f64,
    mu_t: f64,
    sigma_t: f64,
    bracket: f64,
    coupling: f64,
}

fn terms(mho: &GridFunction, reference: &GaussianState, rhs: &Rhs, tol_tail: f64) -> Result<SnapshotTerms> {
    let dyn_ = &rhs.dyn_;
    let m = RatioMoments::compute(mho, reference, tol_tail)?;
    let d = m.chi2().divergence;
    let (gm, gs) = m.gradients()?;
    let drift = &dyn_.a * &reference.mu + &dyn_.drift_const;
    let q = dyn_.diffusion();
    let lyap = &dyn_.a * &reference.sigma + &reference.sigma * dyn_.a.transpose() + &q;
    let (sinv, _) = linalg::cholesky_inverse(&reference.sigma, "reference covariance")?;

    let grid = &mho.grid;
    let n = grid.ndim();
    let dens = GaussianDensity::new(reference)?;
    let grad = mho.gradient(rhs.opts.accuracy);
    let g = rhs.eval_integral(mho)?;
    let mut energy = 0.0;
    let mut coupling = 0.0;
    for f in 0..grid.len() {
        let w = grid.trapezoid_weight(f) * (-dens.log_eval(&grid.point(f))).exp();
        let gv: Vec<f64> = (0..n).map(|k| grad[k][f].re).collect();
        energy += w * linalg::quad_form(&q, &gv);
        coupling += w * mho.values[f].re * g[f].re;
    }
    Ok(SnapshotTerms {
        d,
        mu_t: drift.dot(&gm),
        sigma_t: lyap.component_mul(&gs).sum(),
        bracket: energy - q.component_mul(&sinv).sum() * (d + 1.0),
        coupling: 2.0 * coupling,
    })
}

pub fn dissipation_chi2(traj: &Trajectory, rhs: &Rhs, path: &RefPath, tol_tail: f64) -> Result<Chi2DissipationReport> {
    if rhs.kind != RhsKind::QpdfLinearCoupling {
        return Err(WeylError::InvalidInput("χ² dissipation needs the QPDF right-hand side".into()));
    }
    let snaps = &traj.snapshots;
    if snaps.len() < 3 {
        return Err(WeylError::InvalidInput("need at least three snapshots".into()));
    }
    let refs: Vec<GaussianState> = match path {
        RefPath::Fixed(r) => vec![r.clone(); snaps.len()],
        RefPath::Fitted { init, theta, opts } => {
            let mut cur = init.clone();
            let mut out = Vec::with_capacity(snaps.len());
            for s in snaps {
                let fit = fit_gaussian(s, &cur, theta, opts)?;
                if !fit.converged {
                    log::warn!("χ² fit did not converge at t = {}", s.time);
                }
                cur = fit.state()?;
                out.push(cur.clone());
            }
            out
        }
    };
    let mut rep = Chi2DissipationReport {
        min_bracket: f64::INFINITY,
        ..Default::default()
    };
    let mut fitted_d = Vec::new();
    for k in 1..snaps.len() - 1 {
        let (t0, t1) = (snaps[k - 1].time, snaps[k + 1].time);
        let reference = &refs[k];
        let d_prev = RatioMoments::compute(&snaps[k - 1], reference, tol_tail)?.chi2().divergence;
        let d_next = RatioMoments::compute(&snaps[k + 1], reference, tol_tail)?.chi2().divergence;
        let s = terms(&snaps[k], reference, rhs, tol_tail)?;
        let dt = (d_next - d_prev) / (t1 - t0);
        let residual = dt + s.mu_t + s.sigma_t + s.bracket - s.coupling;
        rep.times.push(snaps[k].time);
        rep.divergence.push(s.d);
        rep.time_derivative.push(dt);
        rep.mu_transport.push(s.mu_t);
        rep.sigma_transport.push(s.sigma_t);
        rep.bracket.push(s.bracket);
        rep.coupling.push(s.coupling);
        rep.residual.push(residual);
        rep.max_residual = rep.max_residual.max(residual.abs());
        rep.min_bracket = rep.min_bracket.min(s.bracket);
        if matches!(path, RefPath::Fitted { .. }) {
            let fp = RatioMoments::compute(&snaps[k - 1], &refs[k - 1], tol_tail)?.chi2().divergence;
            let fnx = RatioMoments::compute(&snaps[k + 1], &refs[k + 1], tol_tail)?.chi2().divergence;
            fitted_d.push(((fnx - fp) / (t1 - t0), s.coupling));
        }
    }
    if !fitted_d.is_empty() {
        let tol = 10.0 * rep.max_residual.max(1e-10);
        rep.min_inequality_ok = Some(fitted_d.iter().all(|(d, bound)| *d <= bound + tol));
        rep.min_total_derivative = fitted_d.into_iter().map(|(d, _)| d).collect();
    }
    Ok(rep)
}
