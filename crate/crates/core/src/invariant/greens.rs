//! Green's function of the stationary Fokker–Planck operator and the
//! `κ`-integral representation of series terms.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::moments::{flow_parameters, steady_state};
use crate::dynamics::rhs::fokker_planck;
use crate::error::{Result, WeylError};
use crate::invariant::timequad::TimeQuadrature;
use crate::kernels::LinearDynamics;
use crate::linalg::{self, Mat};
use crate::phase::gaussian::GaussianDensity;
use crate::phase::grid::GridFunction;

fn require_elliptic(dyn_: &LinearDynamics) -> Result<()> {
    let q = dyn_.diffusion();
    let lo = linalg::min_eigenvalue_sym(&q);
    if lo <= 1e-12 * linalg::max_eigenvalue_sym(&q).max(1.0) {
        return Err(WeylError::NotPositiveDefinite(format!(
            "BBᵀ is not positive definite (min eigenvalue {lo:.3e}); the Green's function needs ellipticity"
        )));
    }
    Ok(())
}

/// Transition densities `N(·; e^{tA}y + m(t), Σ(t))` at one time.
struct Transition {
    et: Mat,
    m: Vec<f64>,
    sigma_inv: Mat,
    log_norm: f64,
}

impl Transition {
    fn new(dyn_: &LinearDynamics, t: f64) -> Result<Self> {
        let fp = flow_parameters(dyn_, t);
        let (sigma_inv, det) = linalg::cholesky_inverse(&fp.sigma, "transition covariance Σ(t)")?;
        let n = dyn_.n() as f64;
        Ok(Self {
            et: linalg::expm(&(&dyn_.a * t)),
            m: fp.mu.as_slice().to_vec(),
            sigma_inv,
            log_norm: -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + det.ln()),
        })
    }

    fn density(&self, x: &[f64], y: &[f64]) -> f64 {
        let centre = linalg::mat_vec(&self.et, y);
        let d: Vec<f64> = x
            .iter()
            .zip(centre.iter().zip(&self.m))
            .map(|(a, (b, c))| a - b - c)
            .collect();
        (self.log_norm - 0.5 * linalg::quad_form(&self.sigma_inv, &d)).exp()
    }
}

/// `κ(x, y) = ∫_{t_min}^∞ (℧_{e^{tA}y + m(t), Σ(t)}(x) − ℧₀(x)) dt`.
///
/// The first panel `[0, t_min]` is left out: there `Σ(t)` degenerates and,
/// for `n ≥ 2`, the integral diverges logarithmically at `x = y`.
pub fn greens_kernel(dyn_: &LinearDynamics, x: &[f64], y: &[f64], tq: &TimeQuadrature) -> Result<f64> {
    Ok(greens_kernel_many(dyn_, &[x.to_vec()], y, tq)?[0])
}

/// [`greens_kernel`] for many `x` sharing one `y` and one set of `t` nodes.
pub fn greens_kernel_many(dyn_: &LinearDynamics, xs: &[Vec<f64>], y: &[f64], tq: &TimeQuadrature) -> Result<Vec<f64>> {
    require_elliptic(dyn_)?;
    let dens = GaussianDensity::new(&steady_state(dyn_)?.state)?;
    let base: Vec<f64> = xs.iter().map(|x| dens.eval(x)).collect();
    let base_peak = base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut acc = vec![0.0; xs.len()];
    tq.run(|t, w| {
        if t < tq.t_min {
            return Ok(base_peak);
        }
        let tr = Transition::new(dyn_, t)?;
        let vals: Vec<f64> = xs.par_iter().zip(&base).map(|(x, b)| tr.density(x, y) - b).collect();
        let mut sup: f64 = 0.0;
        for (a, v) in acc.iter_mut().zip(&vals) {
            *a += w * v;
            sup = sup.max(v.abs());
        }
        Ok(sup)
    })?;
    Ok(acc)
}

/// `∫₀^∞ e^{t𝔉} s dt` at selected nodes of the source grid, split at
/// `t_split`. The head is the Taylor polynomial `Σ t^{j+1}/(j+1)! 𝔉^j s`
/// through `j = 3`; the tail integrates the source against the transition
/// densities, i.e. against `κ`, by the trapezoid rule in `y`. Since
/// `∫ s = 0` for series sources the `℧₀` part of `κ` drops out up to the
/// quadrature error of `∫ s`, which is kept.
pub fn qpdf_from_greens(
    dyn_: &LinearDynamics,
    source: &GridFunction,
    nodes: &[usize],
    t_split: f64,
    tq: &TimeQuadrature,
    accuracy: usize,
) -> Result<Vec<f64>> {
    require_elliptic(dyn_)?;
    let grid = &source.grid;
    let base = GaussianDensity::new(&steady_state(dyn_)?.state)?;
    let mass = source.integral().re;
    let xs: Vec<Vec<f64>> = nodes.iter().map(|&f| grid.point(f)).collect();
    let ys: Vec<(Vec<f64>, f64)> = (0..grid.len())
        .filter(|&f| source.values[f].re != 0.0)
        .map(|f| (grid.point(f), grid.trapezoid_weight(f) * source.values[f].re))
        .collect();

    let mut head: Vec<f64> = nodes.iter().map(|&f| t_split * source.values[f].re).collect();
    let mut power = source.clone();
    let mut coef = t_split;
    for j in 1..=3 {
        power = power.with_values(fokker_planck(&power, dyn_, accuracy));
        coef *= t_split / (j + 1) as f64;
        for (h, &f) in head.iter_mut().zip(nodes) {
            *h += coef * power.values[f].re;
        }
    }

    let tail_quad = TimeQuadrature { t_min: t_split, ..*tq };
    let peak = source.max_abs();
    let mut tail = vec![0.0; nodes.len()];
    tail_quad.run(|t, w| {
        if t < t_split {
            return Ok(peak);
        }
        let tr = Transition::new(dyn_, t)?;
        let vals: Vec<f64> = xs
            .par_iter()
            .map(|x| ys.iter().map(|(y, s)| s * tr.density(x, y)).sum::<f64>() - mass * base.eval(x))
            .collect();
        let mut sup: f64 = 0.0;
        for (a, v) in tail.iter_mut().zip(&vals) {
            *a += w * v;
            sup = sup.max(v.abs());
        }
        Ok(sup)
    })?;
    Ok(head.iter().zip(&tail).map(|(a, b)| a + b).collect())
}

/// Convenience wrapper returning a [`GridFunction`] holding `qpdf_from_greens`
/// on every node.
pub fn qpdf_from_greens_grid(
    dyn_: &LinearDynamics,
    source: &GridFunction,
    t_split: f64,
    tq: &TimeQuadrature,
    accuracy: usize,
) -> Result<GridFunction> {
    let nodes: Vec<usize> = (0..source.grid.len()).collect();
    let v = qpdf_from_greens(dyn_, source, &nodes, t_split, tq, accuracy)?;
    Ok(source.with_values(v.into_iter().map(|x| Complex64::new(x, 0.0)).collect()))
}
