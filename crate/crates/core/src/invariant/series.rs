//! Perturbation series `Φ = Σ Φ_k`, `℧ = Σ ℧_k` around the Gaussian
//! invariant state of the linear flow.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dynamics::flow::LinearPropagator;
use crate::dynamics::moments::{flow_parameters, steady_state, SteadyState};
use crate::dynamics::rhs::{fokker_planck, qcf_linear_part, Rhs, RhsOptions};
use crate::error::{Result, WeylError};
use crate::invariant::timequad::TimeQuadrature;
use crate::kernels::{compute_linear_dynamics, EnergySpec, LinearDynamics, MoyalImage};
use crate::linalg;
use crate::phase::fourier::{qcf_to_qpdf, qpdf_to_qcf};
use crate::phase::gaussian::GaussianState;
use crate::phase::grid::{Grid, GridFunction, GridKind};
use crate::phase::io;
use crate::phase::symplectic::SymplecticData;

type CMat = DMatrix<Complex64>;

/// Gaussian invariant state of the linear part, sampled on the requested grids.
#[derive(Debug, Clone)]
pub struct GaussianInvariant {
    pub steady: SteadyState,
    pub qcf: Option<GridFunction>,
    pub qpdf: Option<GridFunction>,
    /// Smallest eigenvalue of `Σ₀ + iΘ`.
    pub uncertainty_margin: f64,
}

pub fn gaussian_invariant(
    dyn_: &LinearDynamics,
    sym: &SymplecticData,
    qcf_grid: Option<&Grid>,
    qpdf_grid: Option<&Grid>,
) -> Result<GaussianInvariant> {
    let steady = steady_state(dyn_)?;
    let qcf = qcf_grid.map(|g| steady.state.sample_qcf(g));
    let qpdf = match qpdf_grid {
        Some(g) => Some(steady.state.sample_qpdf(g)?),
        None => None,
    };
    let uncertainty_margin = steady.state.uncertainty_margin(&sym.theta);
    Ok(GaussianInvariant {
        steady,
        qcf,
        qpdf,
        uncertainty_margin,
    })
}

/// `𝔅(φ)(u) = −2 ∫ sin(uᵀΘZᵀv) H̃₀(v) φ(u + Zᵀv) dv` for linear coupling.
pub fn apply_fb(phi: &GridFunction, spec: &EnergySpec, sym: &SymplecticData, opts: RhsOptions) -> Result<GridFunction> {
    let rhs = Rhs::qcf_linear_coupling(spec, sym, opts)?;
    let phi = phi.clone().with_kind(GridKind::Qcf);
    Ok(phi.with_values(rhs.eval_integral(&phi)?).with_kind(GridKind::Generic))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub order: usize,
    pub time: TimeQuadrature,
    pub rhs: RhsOptions,
    /// Nodes excluded from each face when measuring residuals; `None` uses
    /// one eighth of the points per axis.
    pub residual_margin: Option<usize>,
    pub tol_tail: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            order: 3,
            time: TimeQuadrature::default(),
            rhs: RhsOptions::default(),
            residual_margin: None,
            tol_tail: 1e-8,
        }
    }
}

impl SeriesConfig {
    fn margin(&self, grid: &Grid) -> usize {
        self.residual_margin
            .unwrap_or_else(|| grid.dims.iter().copied().min().unwrap_or(0) / 8)
    }
}

/// One series term with its plug-in residual.
#[derive(Debug, Clone)]
pub struct SeriesTerm {
    pub term: GridFunction,
    /// Interior sup of `𝔄Φ_k + 𝔅Φ_{k−1}` or `𝔉℧_k + 𝔊℧_{k−1}`.
    pub residual: f64,
    pub truncation: f64,
}

fn interior_sup(grid: &Grid, values: &[Complex64], margin: usize) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(flat, _)| grid.interior(*flat, margin))
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max)
}

/// `∫₀^∞ e^{t𝔄} s dt` on the QCF grid with the exact linear flow as
/// propagator.
fn semigroup_integral_qcf(source: &GridFunction, dyn_: &LinearDynamics, opts: &RhsOptions, tq: &TimeQuadrature) -> Result<(Vec<Complex64>, f64)> {
    let mut acc = vec![Complex64::new(0.0, 0.0); source.values.len()];
    let mut excursions = 0usize;
    let t_end = tq.run(|t, w| {
        let (p, exc) = LinearPropagator::new(dyn_, t).apply(source, &opts.interp);
        excursions += exc;
        let mut sup: f64 = 0.0;
        for (a, v) in acc.iter_mut().zip(&p.values) {
            *a += v * w;
            sup = sup.max(v.norm());
        }
        Ok(sup)
    })?;
    if excursions > 0 {
        log::debug!("series step: {excursions} characteristic feet left the grid");
    }
    Ok((acc, t_end))
}

/// Solves `𝔄Φ_k = −𝔅Φ_{k−1}`, `Φ_k(0) = 0`, as `Φ_k = ∫₀^∞ e^{t𝔄}𝔅Φ_{k−1} dt`.
pub fn series_step_qcf(prev: &GridFunction, rhs: &Rhs, cfg: &SeriesConfig) -> Result<SeriesTerm> {
    let src_vals = rhs.eval_integral(prev)?;
    let source = prev.with_values(src_vals.clone()).at_time(0.0);
    let (vals, truncation) = semigroup_integral_qcf(&source, &rhs.dyn_, &rhs.opts, &cfg.time)?;
    let term = source.with_values(vals);
    let res: Vec<Complex64> = qcf_linear_part(&term, &rhs.dyn_, rhs.opts.accuracy)
        .into_iter()
        .zip(&src_vals)
        .map(|(a, b)| a + b)
        .collect();
    let residual = interior_sup(&term.grid, &res, cfg.margin(&term.grid));
    Ok(SeriesTerm {
        term,
        residual,
        truncation,
    })
}

/// `r(t) = det(Q P_t)^{-1/2}` continued along `t` from `r(0) = 1`.
struct BranchTracker {
    prev: Complex64,
}

impl BranchTracker {
    fn next(&mut self, det: Complex64) -> Complex64 {
        let r = det.sqrt().inv();
        let r = if (r - self.prev).norm() <= (-r - self.prev).norm() { r } else { -r };
        self.prev = r;
        r
    }
}

/// Closed-form `℧₁` for a Gaussian `℧₀`: the source `𝔊(℧₀)` is the imaginary
/// part of a complex Gaussian per potential term, and the Fokker–Planck flow
/// maps complex Gaussians to complex Gaussians.
pub fn series_step_qpdf_gaussian(
    base: &GaussianState,
    spec: &EnergySpec,
    sym: &SymplecticData,
    grid: &Grid,
    cfg: &SeriesConfig,
) -> Result<SeriesTerm> {
    let dyn_ = compute_linear_dynamics(spec, sym)?;
    let n = sym.n;
    if grid.ndim() != n {
        return Err(WeylError::Dimension("QPDF grid rank differs from n".into()));
    }
    struct Piece {
        e: Complex64,
        mhat: DVector<Complex64>,
        q: CMat,
        q_inv: CMat,
        branch: BranchTracker,
    }
    let mut pieces = Vec::new();
    let mut source = vec![0.0; grid.len()];
    for term in &spec.potential_terms {
        let img = MoyalImage::new(base, term, sym)?;
        let (q, l) = img.complex_form();
        let q_inv = q
            .clone()
            .try_inverse()
            .ok_or_else(|| WeylError::NotPositiveDefinite("complex quadratic form is singular".into()))?;
        let ql = &q_inv * &l;
        let shift = (l.transpose() * &ql)[(0, 0)] * 0.5;
        let mhat = DVector::from_fn(n, |i, _| Complex64::new(img.mu[i], 0.0) + ql[i]);
        for (flat, s) in source.iter_mut().enumerate() {
            *s += img.eval(&grid.point(flat));
        }
        pieces.push(Piece {
            e: Complex64::new(img.e, 0.0) * shift.exp(),
            mhat,
            q,
            q_inv,
            branch: BranchTracker { prev: Complex64::new(1.0, 0.0) },
        });
    }
    let points = grid.points();
    let mut acc = vec![0.0; grid.len()];
    let truncation = cfg.time.run(|t, w| {
        let et = linalg::expm(&(&dyn_.a * t));
        let fp = flow_parameters(&dyn_, t);
        let etc = et.map(|v| Complex64::new(v, 0.0));
        let mut sup: f64 = 0.0;
        let mut vals = vec![0.0; points.len()];
        for p in pieces.iter_mut() {
            let pt = &etc * &p.q_inv * etc.transpose() + fp.sigma.map(|v| Complex64::new(v, 0.0));
            let pt_inv = pt
                .clone()
                .try_inverse()
                .ok_or_else(|| WeylError::NotPositiveDefinite("propagated complex covariance is singular".into()))?;
            let r = p.branch.next((&p.q * &pt).determinant());
            let mt: Vec<Complex64> = (0..n)
                .map(|i| (0..n).map(|j| etc[(i, j)] * p.mhat[j]).sum::<Complex64>() + fp.mu[i])
                .collect();
            let pre = p.e * r;
            let contrib: Vec<f64> = points
                .par_iter()
                .map(|x| {
                    let y: Vec<Complex64> = x.iter().zip(&mt).map(|(a, b)| Complex64::new(*a, 0.0) - b).collect();
                    let mut quad = Complex64::new(0.0, 0.0);
                    for i in 0..n {
                        for j in 0..n {
                            quad += y[i] * pt_inv[(i, j)] * y[j];
                        }
                    }
                    (pre * (-0.5 * quad).exp()).im
                })
                .collect();
            vals.iter_mut().zip(contrib).for_each(|(a, b)| *a += b);
        }
        for (a, v) in acc.iter_mut().zip(&vals) {
            *a += w * v;
            sup = sup.max(v.abs());
        }
        Ok(sup)
    })?;
    let term = GridFunction::new(
        grid.clone(),
        acc.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        GridKind::Qpdf,
    )?;
    let res: Vec<Complex64> = fokker_planck(&term, &dyn_, cfg.rhs.accuracy)
        .into_iter()
        .zip(&source)
        .map(|(a, b)| a + b)
        .collect();
    let residual = interior_sup(grid, &res, cfg.margin(grid));
    Ok(SeriesTerm {
        term,
        residual,
        truncation,
    })
}

/// `℧_k = ∫₀^∞ e^{t𝔉}𝔊(℧_{k−1}) dt` for a gridded `℧_{k−1}`. The source is
/// moved to the characteristic-function side, propagated by the exact flow
/// there and transformed back.
pub fn series_step_qpdf(prev: &GridFunction, rhs: &Rhs, cfg: &SeriesConfig) -> Result<SeriesTerm> {
    let src_vals = rhs.eval_integral(prev)?;
    let source = prev.with_values(src_vals.clone()).at_time(0.0);
    let (mut hat, _) = qpdf_to_qcf(&source, cfg.tol_tail)?;
    // Quadrature leaves a residual mass in the source; its component along
    // the invariant Gaussian never decays under the flow, so it is removed.
    let origin = hat.grid.origin_index().ok_or_else(|| WeylError::InvalidInput("QPDF grid is not origin-centred".into()))?;
    let mass = hat.values[origin];
    if mass != Complex64::new(0.0, 0.0) {
        log::debug!("series step: removing source mass {:.3e}", mass.norm());
        let base = steady_state(&rhs.dyn_)?.state;
        for (flat, v) in hat.values.iter_mut().enumerate() {
            *v -= mass * base.qcf(&hat.grid.point(flat));
        }
    }
    let (vals, truncation) = semigroup_integral_qcf(&hat, &rhs.dyn_, &cfg.rhs, &cfg.time)?;
    let (back, _) = qcf_to_qpdf(&hat.with_values(vals), cfg.tol_tail)?;
    let term = prev.with_values(back.values.iter().map(|v| Complex64::new(v.re, 0.0)).collect());
    let res: Vec<Complex64> = fokker_planck(&term, &rhs.dyn_, rhs.opts.accuracy)
        .into_iter()
        .zip(&src_vals)
        .map(|(a, b)| a + b)
        .collect();
    let residual = interior_sup(&term.grid, &res, cfg.margin(&term.grid));
    Ok(SeriesTerm {
        term,
        residual,
        truncation,
    })
}

/// Series terms on either side. Index 0 holds the Gaussian invariant.
#[derive(Debug, Clone)]
pub struct SeriesState {
    pub spec: EnergySpec,
    pub sym: SymplecticData,
    pub config: SeriesConfig,
    pub base: GaussianState,
    pub qcf_terms: Vec<GridFunction>,
    pub qpdf_terms: Vec<GridFunction>,
    /// Residuals of terms `1..`, same indexing shifted by one.
    pub qcf_residuals: Vec<f64>,
    pub qpdf_residuals: Vec<f64>,
    pub truncation_times: Vec<f64>,
}

impl SeriesState {
    pub fn order(&self) -> usize {
        self.qcf_terms.len().max(self.qpdf_terms.len()).saturating_sub(1)
    }

    pub fn qcf_partial_sum(&self, k: usize) -> Option<GridFunction> {
        partial_sum(&self.qcf_terms, k)
    }

    pub fn qpdf_partial_sum(&self, k: usize) -> Option<GridFunction> {
        partial_sum(&self.qpdf_terms, k)
    }

    /// One `.bin` (+ JSON sidecar) per term and `summary.json`.
    pub fn write(&self, dir: &Path, summary: &serde_json::Value) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (side, terms) in [("qcf", &self.qcf_terms), ("qpdf", &self.qpdf_terms)] {
            for (k, f) in terms.iter().enumerate() {
                let name = format!("term_{side}_{k}.bin");
                io::write_grid(f, &dir.join(&name), json!({"order": k, "side": side}))?;
                files.push(name);
            }
        }
        let doc = json!({
            "files": files,
            "order": self.order(),
            "base": {"mu": self.base.mu.as_slice(), "sigma": self.base.sigma.as_slice()},
            "qcf_residuals": self.qcf_residuals,
            "qpdf_residuals": self.qpdf_residuals,
            "truncation_times": self.truncation_times,
            "summary": summary,
        });
        let path = dir.join("summary.json");
        std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
        Ok(path)
    }
}

fn partial_sum(terms: &[GridFunction], k: usize) -> Option<GridFunction> {
    let mut it = terms.iter().take(k + 1);
    let first = it.next()?.clone().with_kind(terms[0].kind);
    Some(it.fold(first, |acc, t| acc.add(t)))
}

/// Computes the series to `cfg.order` on the grids given.
pub fn invariant_series(
    spec: &EnergySpec,
    sym: &SymplecticData,
    qcf_grid: Option<&Grid>,
    qpdf_grid: Option<&Grid>,
    cfg: &SeriesConfig,
) -> Result<SeriesState> {
    spec.validate(sym)?;
    let dyn_ = compute_linear_dynamics(spec, sym)?;
    let g0 = gaussian_invariant(&dyn_, sym, qcf_grid, qpdf_grid)?;
    let mut state = SeriesState {
        spec: spec.clone(),
        sym: sym.clone(),
        config: *cfg,
        base: g0.steady.state.clone(),
        qcf_terms: g0.qcf.into_iter().collect(),
        qpdf_terms: g0.qpdf.into_iter().collect(),
        qcf_residuals: Vec::new(),
        qpdf_residuals: Vec::new(),
        truncation_times: Vec::new(),
    };
    if !state.qcf_terms.is_empty() {
        let rhs = Rhs::qcf_linear_coupling(spec, sym, cfg.rhs)?;
        for k in 1..=cfg.order {
            let step = series_step_qcf(&state.qcf_terms[k - 1], &rhs, cfg)?;
            log::info!("Φ_{k}: residual {:.3e}, truncated at t = {:.1}", step.residual, step.truncation);
            state.qcf_residuals.push(step.residual);
            state.truncation_times.push(step.truncation);
            state.qcf_terms.push(step.term);
        }
    }
    if let Some(grid) = qpdf_grid {
        if cfg.order >= 1 {
            if linalg::min_eigenvalue_sym(&dyn_.diffusion()) <= 0.0 {
                log::warn!("BBᵀ is singular: the QPDF series is not elliptic");
            }
            let step = series_step_qpdf_gaussian(&state.base, spec, sym, grid, cfg)?;
            log::info!("℧_1: residual {:.3e}", step.residual);
            state.qpdf_residuals.push(step.residual);
            state.qpdf_terms.push(step.term);
        }
        if cfg.order >= 2 {
            let rhs = Rhs::qpdf_linear_coupling(spec, sym, cfg.rhs)?;
            for k in 2..=cfg.order {
                let step = series_step_qpdf(&state.qpdf_terms[k - 1], &rhs, cfg)?;
                log::info!("℧_{k}: residual {:.3e}", step.residual);
                state.qpdf_residuals.push(step.residual);
                state.qpdf_terms.push(step.term);
            }
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GaussianPotentialTerm;
    use crate::linalg::{Mat, Vector};
    use crate::phase::grid::{Boundary, Interpolation};

    fn spec(c: f64) -> EnergySpec {
        let term = GaussianPotentialTerm::new(c, vec![0.5], Mat::identity(1, 1) * 2.0, vec![0]).unwrap();
        EnergySpec::new(
            Vector::from_vec(vec![0.1, 0.0]),
            Mat::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.5]),
            Mat::identity(2, 2) * 0.6,
            vec![term],
        )
    }

    fn cfg() -> SeriesConfig {
        SeriesConfig {
            order: 1,
            time: TimeQuadrature { tol: 1e-10, ..Default::default() },
            rhs: RhsOptions {
                accuracy: 8,
                interp: Interpolation::with_points(8, Boundary::ZeroPad),
                quad_nodes: 32,
            },
            residual_margin: None,
            tol_tail: 1e-8,
        }
    }

    #[test]
    fn gaussian_invariant_samples_and_margin() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let s = spec(1.0);
        let d = compute_linear_dynamics(&s, &sym).unwrap();
        let g = Grid::cube(2, 33, 6.0).unwrap();
        let inv = gaussian_invariant(&d, &sym, Some(&g), Some(&g)).unwrap();
        assert!(inv.uncertainty_margin >= -1e-10);
        let st = &inv.steady.state;
        for flat in [0, 100, 545] {
            let p = g.point(flat);
            assert_eq!(inv.qcf.as_ref().unwrap().values[flat], st.qcf(&p));
            assert_eq!(inv.qpdf.as_ref().unwrap().values[flat].re, st.qpdf(&p).unwrap());
        }
    }

    #[test]
    fn fb_vanishes_at_origin_and_is_linear() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let g = Grid::cube(2, 33, 6.0).unwrap();
        let phi = GaussianState::centered(Mat::identity(2, 2)).unwrap().sample_qcf(&g);
        let a = apply_fb(&phi, &spec(1.0), &sym, cfg().rhs).unwrap();
        let b = apply_fb(&phi, &spec(2.5), &sym, cfg().rhs).unwrap();
        assert_eq!(a.origin_value().unwrap(), Complex64::new(0.0, 0.0));
        assert!(a.scale(2.5).max_abs_diff(&b) < 1e-13);
    }

    #[test]
    fn linear_system_has_trivial_terms() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let s = spec(1.0).without_potential();
        let g = Grid::cube(2, 33, 6.0).unwrap();
        let st = invariant_series(&s, &sym, Some(&g), Some(&g), &SeriesConfig { order: 2, ..cfg() }).unwrap();
        assert_eq!(st.qcf_terms.len(), 3);
        for k in 1..3 {
            assert_eq!(st.qcf_terms[k].max_abs(), 0.0);
            assert_eq!(st.qpdf_terms[k].max_abs(), 0.0);
        }
    }

    #[test]
    fn first_order_terms_solve_their_equations_and_pair_up() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let s = spec(1.0);
        let x_grid = Grid::cube(2, 129, 8.0).unwrap();
        let u_grid = crate::phase::fourier::dual_grid(&x_grid).unwrap();
        let st = invariant_series(&s, &sym, Some(&u_grid), Some(&x_grid), &cfg()).unwrap();
        let (phi1, mho1) = (&st.qcf_terms[1], &st.qpdf_terms[1]);
        assert!(st.qcf_residuals[0] < 1e-4, "QCF residual {}", st.qcf_residuals[0]);
        assert!(st.qpdf_residuals[0] < 1e-4, "QPDF residual {}", st.qpdf_residuals[0]);
        assert!(phi1.origin_value().unwrap().norm() < 1e-12);
        assert!(mho1.integral().norm() < 1e-6, "mass {}", mho1.integral());
        let (ft, _) = qcf_to_qpdf(phi1, 1e-6).unwrap();
        let diff = ft.max_abs_diff(mho1);
        assert!(diff < 1e-4, "Fourier pair {diff}");
        assert!(phi1.hermitian_residual() < 1e-10);
    }
}
