//! Balance checks along trajectories: mean dynamics, weighted norms and the
//! dissipation relation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::evolve::Trajectory;
use crate::dynamics::moments::integrate_moment_odes;
use crate::dynamics::rhs::Rhs;
use crate::error::{Result, WeylError};
use crate::kernels::symbols::symbol_f_on_support;
use crate::linalg::{self, Mat};
use crate::phase::gaussian::GaussianState;
use crate::phase::grid::{GridFunction, GridKind};
use crate::phase::moments::moments_from_qcf;
use crate::phase::psi::MultiIndex;
use crate::quadrature::QuadratureRule;

fn uniform_spacing(times: &[f64]) -> Result<f64> {
    if times.len() < 3 {
        return Err(WeylError::InvalidInput("need at least three snapshots".into()));
    }
    let h = times[1] - times[0];
    if times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1e-300)) {
        return Err(WeylError::InvalidInput("snapshots must be equally spaced in time".into()));
    }
    Ok(h)
}

fn qcf_snapshots(traj: &Trajectory) -> Result<()> {
    if traj.snapshots.iter().any(|s| s.kind != GridKind::Qcf) {
        return Err(WeylError::InvalidInput("trajectory must consist of QCF snapshots".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanDynamicsReport {
    pub times: Vec<f64>,
    /// Central differences of the extracted means.
    pub finite_difference: Vec<Vec<f64>>,
    /// `Aμ + 2Θb + ∫F(u)Φ(t,u)du`.
    pub drift_average: Vec<Vec<f64>>,
    pub max_deviation: f64,
}

/// Mean vector of a QCF grid by central differences at the origin.
pub fn qcf_mean(phi: &GridFunction, accuracy: usize) -> Result<Vec<f64>> {
    let n = phi.grid.ndim();
    let tt = crate::phase::symplectic::TildeTheta::zero(n);
    (0..n)
        .map(|j| Ok(moments_from_qcf(phi, &MultiIndex::unit(n, j), &tt, accuracy)?.re))
        .collect()
}

/// `E f(X) = Aμ + 2Θb + Σ_terms ∫ F_term(v) Φ(Zᵀv) dv`, the regular part by
/// whitened Gauss–Hermite with interpolation of `Φ`.
pub fn mean_drift(phi: &GridFunction, mu: &[f64], rhs: &Rhs) -> Vec<f64> {
    let n = rhs.sym.n;
    let mut out = rhs.dyn_.drift(mu);
    for t in &rhs.terms {
        let rule = QuadratureRule::whitened_hermite(&t.term.lambda_matrix(), rhs.opts.quad_nodes);
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        for (v, w) in rule.nodes.iter().zip(&rule.weights) {
            let s = t.term.lift(v, n);
            let (val, _) = phi.interpolate(&s, &rhs.opts.interp);
            // the whitened rule already carries the Gaussian weight of H̃₀
            let f = symbol_f_on_support(v, t, &rhs.sym) * Complex64::new(1.0 / t.envelope(v), 0.0);
            for k in 0..n {
                acc[k] += f[k] * val * *w;
            }
        }
        for k in 0..n {
            out[k] += acc[k].re;
        }
    }
    out
}

pub fn mean_dynamics_check(traj: &Trajectory, rhs: &Rhs, accuracy: usize) -> Result<MeanDynamicsReport> {
    qcf_snapshots(traj)?;
    let times = traj.times();
    let h = uniform_spacing(&times)?;
    let means: Vec<Vec<f64>> = traj
        .snapshots
        .iter()
        .map(|s| qcf_mean(s, accuracy))
        .collect::<Result<_>>()?;
    let mut rep = MeanDynamicsReport {
        times: Vec::new(),
        finite_difference: Vec::new(),
        drift_average: Vec::new(),
        max_deviation: 0.0,
    };
    for k in 1..times.len() - 1 {
        let fd: Vec<f64> = means[k + 1]
            .iter()
            .zip(&means[k - 1])
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let avg = mean_drift(&traj.snapshots[k], &means[k], rhs);
        let dev = fd.iter().zip(&avg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rep.max_deviation = rep.max_deviation.max(dev);
        rep.times.push(times[k]);
        rep.finite_difference.push(fd);
        rep.drift_average.push(avg);
    }
    Ok(rep)
}

/// `⦀Φ⦀²_P = ∫ e^{uᵀPu} |Φ(u)|² du` by the trapezoidal rule. The integrand
/// must be below `tol_tail` on the grid boundary.
pub fn weighted_norm(phi: &GridFunction, p: &Mat, tol_tail: f64) -> Result<f64> {
    weighted_integral(phi, p, tol_tail, |_, v| v.norm_sqr())
}

fn weighted_integral<F>(phi: &GridFunction, p: &Mat, tol_tail: f64, f: F) -> Result<f64>
where
    F: Fn(&[f64], Complex64) -> f64 + Sync,
{
    let grid = &phi.grid;
    if p.nrows() != grid.ndim() || p.ncols() != grid.ndim() {
        return Err(WeylError::Dimension("weight matrix does not match the grid".into()));
    }
    let tail = (0..grid.len())
        .filter(|&i| grid.on_boundary(i))
        .map(|i| {
            let u = grid.point(i);
            linalg::quad_form(p, &u).exp() * phi.values[i].norm_sqr()
        })
        .fold(0.0, f64::max);
    if !(tail <= tol_tail) {
        return Err(WeylError::Tail(format!(
            "weighted integrand reaches {tail:.3e} on the grid boundary (limit {tol_tail:.1e})"
        )));
    }
    Ok(phi
        .weighted_integral(|u, v| Complex64::new(linalg::quad_form(p, u).exp() * f(u, v), 0.0))
        .re)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DissipationReport {
    pub times: Vec<f64>,
    pub weighted_norm: Vec<f64>,
    /// `∂ₜ⦀Φ⦀²_P` at fixed `P`, by central differences.
    pub time_derivative: Vec<f64>,
    /// `∫ e^{uᵀPu} uᵀṖu |Φ|² du`.
    pub transport: Vec<f64>,
    /// `−⦀Φ⦀²_P Tr A`.
    pub trace_term: Vec<f64>,
    /// `2⟪Φ, 𝔅(Φ)⟫_P`.
    pub coupling_term: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_residual: f64,
}

/// Evaluates every term of the dissipation relation at the interior
/// snapshots of `traj`, with `P` following `Ṗ = AP + PAᵀ + BBᵀ` from `p0`.
pub fn dissipation_balance(traj: &Trajectory, rhs: &Rhs, p0: &Mat, tol_tail: f64) -> Result<DissipationReport> {
    qcf_snapshots(traj)?;
    let times = traj.times();
    let h = uniform_spacing(&times)?;
    let dyn_ = &rhs.dyn_;
    let n = dyn_.n();
    let q = dyn_.diffusion();
    let trace_a = dyn_.a.trace();
    let t0 = times[0];
    let sub = h.min(1e-3);
    let p_path: Vec<Mat> = times
        .iter()
        .map(|&t| {
            let init = GaussianState {
                mu: crate::linalg::Vector::zeros(n),
                sigma: p0.clone(),
            };
            integrate_moment_odes(dyn_, &init, t - t0, sub).sigma
        })
        .collect();
    let mut rep = DissipationReport {
        times: Vec::new(),
        weighted_norm: Vec::new(),
        time_derivative: Vec::new(),
        transport: Vec::new(),
        trace_term: Vec::new(),
        coupling_term: Vec::new(),
        residual: Vec::new(),
        max_residual: 0.0,
    };
    for k in 1..times.len() - 1 {
        let p = &p_path[k];
        let pdot = &dyn_.a * p + p * dyn_.a.transpose() + &q;
        let phi = &traj.snapshots[k];
        let norm = weighted_norm(phi, p, tol_tail)?;
        let fwd = weighted_norm(&traj.snapshots[k + 1], p, tol_tail)?;
        let bwd = weighted_norm(&traj.snapshots[k - 1], p, tol_tail)?;
        let dndt = (fwd - bwd) / (2.0 * h);
        let transport = weighted_integral(phi, p, tol_tail, |u, v| linalg::quad_form(&pdot, u) * v.norm_sqr())?;
        let coupling = if rhs.has_integral() {
            let b = rhs.eval_integral(phi)?;
            let bf = phi.with_values(b);
            2.0 * phi
                .values
                .iter()
                .zip(&bf.values)
                .enumerate()
                .map(|(i, (a, bv))| {
                    let u = phi.grid.point(i);
                    linalg::quad_form(p, &u).exp() * (a.conj() * bv).re * phi.grid.trapezoid_weight(i)
                })
                .sum::<f64>()
        } else {
            0.0
        };
        let trace_term = -norm * trace_a;
        let residual = dndt + transport - trace_term - coupling;
        rep.max_residual = rep.max_residual.max(residual.abs());
        rep.times.push(times[k]);
        rep.weighted_norm.push(norm);
        rep.time_derivative.push(dndt);
        rep.transport.push(transport);
        rep.trace_term.push(trace_term);
        rep.coupling_term.push(coupling);
        rep.residual.push(residual);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::evolve::{evolve, EvolutionConfig};
    use crate::dynamics::flow::exact_linear_qcf_flow;
    use crate::dynamics::moments::flow_parameters;
    use crate::dynamics::rhs::RhsOptions;
    use crate::kernels::{EnergySpec, GaussianPotentialTerm};
    use crate::linalg::Vector;
    use crate::phase::grid::{Boundary, Grid, Interpolation};
    use crate::phase::symplectic::SymplecticData;
    use crate::quadrature::gauss_hermite;
    use std::f64::consts::PI;

    fn spec(potential: bool) -> EnergySpec {
        let terms = if potential {
            vec![GaussianPotentialTerm::new(0.6, vec![0.3], Mat::identity(1, 1), vec![0]).unwrap()]
        } else {
            vec![]
        };
        EnergySpec::new(
            Vector::from_vec(vec![0.1, -0.2]),
            Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]),
            Mat::identity(2, 2) * 0.5f64.sqrt(),
            terms,
        )
    }

    fn opts() -> RhsOptions {
        RhsOptions {
            accuracy: 8,
            interp: Interpolation::with_points(8, Boundary::ZeroPad),
            quad_nodes: 40,
        }
    }

    fn state() -> GaussianState {
        GaussianState::new(
            Vector::from_vec(vec![0.3, -0.2]),
            Mat::from_row_slice(2, 2, &[1.2, 0.2, 0.2, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn gaussian_norm_oracle() {
        let st = GaussianState::centered(Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8])).unwrap();
        let phi = st.sample_qcf(&Grid::cube(2, 129, 9.0).unwrap());
        let got = weighted_norm(&phi, &Mat::zeros(2, 2), 1e-8).unwrap();
        let exact = PI / st.sigma.determinant().sqrt();
        assert!((got - exact).abs() < 1e-10, "{got} {exact}");
        assert!(matches!(
            weighted_norm(&phi, &(Mat::identity(2, 2) * 2.0), 1e-8),
            Err(WeylError::Tail(_))
        ));
    }

    #[test]
    fn norm_decays_with_trace_along_characteristics() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let rhs = Rhs::qcf_linear_coupling(&spec(false), &sym, opts()).unwrap();
        let grid = Grid::cube(2, 129, 10.0).unwrap();
        let phi0 = state().sample_qcf(&grid);
        let base = weighted_norm(&phi0, &Mat::zeros(2, 2), 1e-8).unwrap();
        let t = 0.8;
        let phit = exact_linear_qcf_flow(&phi0, &rhs.dyn_, t, &opts().interp);
        let p = flow_parameters(&rhs.dyn_, t).sigma;
        let got = weighted_norm(&phit, &p, 1e-8).unwrap();
        let expect = base * (-t * rhs.dyn_.a.trace()).exp();
        assert!((got - expect).abs() < 1e-6 * expect, "{got} {expect}");
    }

    #[test]
    fn dissipation_residual_on_linear_flow() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let rhs = Rhs::qcf_linear_coupling(&spec(false), &sym, opts()).unwrap();
        let phi0 = state().sample_qcf(&Grid::cube(2, 97, 10.0).unwrap());
        let run = |every| {
            let cfg = EvolutionConfig { dt: 0.005, t_end: 0.4, snapshot_every: every, ..Default::default() };
            let tr = evolve(&phi0, &rhs, &cfg).unwrap();
            dissipation_balance(&tr, &rhs, &Mat::zeros(2, 2), 1e-8).unwrap().max_residual
        };
        let coarse = run(2);
        let fine = run(1);
        assert!(fine < 1e-4, "{fine}");
        assert!((coarse / fine).log2() > 1.5, "{coarse} {fine}");
    }

    #[test]
    fn mean_drift_matches_gaussian_average() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let s = spec(true);
        let rhs = Rhs::qcf_linear_coupling(&s, &sym, opts()).unwrap();
        let st = state();
        let phi = st.sample_qcf(&Grid::cube(2, 129, 10.0).unwrap());
        let got = mean_drift(&phi, st.mu.as_slice(), &rhs);
        // E[2ΘZᵀφ'(q)] with q = X₁ ~ N(μ₁, Σ₁₁), φ'(q) = cΛ(q − γ)e^{−½Λ(q−γ)²}
        let t = &s.potential_terms[0];
        let (x, w) = gauss_hermite(60);
        let sd = st.sigma[(0, 0)].sqrt();
        let lam = t.lambda[0];
        let mut e = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let q = st.mu[0] + sd * xi;
            let y = q - t.gamma[0];
            e += wi * t.c * lam * y * (-0.5 * lam * y * y).exp();
        }
        e /= (2.0 * PI).sqrt();
        let grad = Vector::from_vec(vec![e, 0.0]);
        let regular = &sym.theta * grad * 2.0;
        let lin = rhs.dyn_.drift(st.mu.as_slice());
        for k in 0..2 {
            assert!((got[k] - lin[k] - regular[k]).abs() < 1e-8, "{k}: {} vs {}", got[k] - lin[k], regular[k]);
        }
    }

    #[test]
    fn mean_dynamics_on_linear_and_potential_runs() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let phi0 = state().sample_qcf(&Grid::cube(2, 129, 8.0).unwrap());
        for pot in [false, true] {
            let rhs = Rhs::qcf_linear_coupling(&spec(pot), &sym, opts()).unwrap();
            let cfg = EvolutionConfig { dt: 0.004, t_end: 0.2, snapshot_every: 1, ..Default::default() };
            let tr = evolve(&phi0, &rhs, &cfg).unwrap();
            let rep = mean_dynamics_check(&tr, &rhs, 8).unwrap();
            let tol = if pot { 5e-4 } else { 1e-5 };
            assert!(rep.max_deviation < tol, "{pot}: {}", rep.max_deviation);
        }
    }

    #[test]
    fn frozen_mean_without_dynamics() {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let s = EnergySpec::new(Vector::zeros(2), Mat::zeros(2, 2), Mat::zeros(2, 2), vec![]);
        let rhs = Rhs::qcf_linear_coupling(&s, &sym, opts()).unwrap();
        let phi0 = state().sample_qcf(&Grid::cube(2, 65, 8.0).unwrap());
        let cfg = EvolutionConfig { dt: 0.01, t_end: 0.1, snapshot_every: 2, ..Default::default() };
        let tr = evolve(&phi0, &rhs, &cfg).unwrap();
        let m0 = qcf_mean(&tr.snapshots[0], 8).unwrap();
        let m1 = qcf_mean(tr.last(), 8).unwrap();
        assert_eq!(m0, m1);
    }
}
