//! Acceptance gate. Every test checks one headline property at its stated
//! tolerance and writes a single `PASS`/`FAIL` line to stderr (bypassing the
//! harness capture) before asserting.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weylflow::classiclimit::{
    canonical_identity_check, phi, random_canonical_samples, simulate_sde, ClassicalSpec, InitialCondition, SdeConfig,
};
use weylflow::dynamics::moments::{integrate_moment_odes, propagate_gaussian, steady_state};
use weylflow::dynamics::rhs::{qcf_rhs_general, qcf_rhs_linear_coupling};
use weylflow::dynamics::{dissipation_balance, evolve, stability_bound, EvolutionConfig, Rhs, RhsOptions, Scheme, Trajectory};
use weylflow::gaussfit::{chi2_divergence, chi2_gradients, dirichlet_check, dissipation_chi2, fit_gaussian, FitOptions, RefPath};
use weylflow::invariant::{invariant_series, SeriesConfig, TimeQuadrature};
use weylflow::kernels::{compute_linear_dynamics, kernel_pi, moyal_image_of_gaussian, EnergySpec, GaussianPotentialTerm};
use weylflow::linalg::{self, Mat, Vector};
use weylflow::phase::fourier::{dual_grid, qcf_to_qpdf};
use weylflow::phase::moments::mean_and_covariance;
use weylflow::phase::{Boundary, GaussianState, Grid, GridFunction, GridKind, Interpolation, SymplecticData, TildeTheta};

fn verdict(name: &str, ok: bool, detail: String) {
    let line = format!("{} {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "{name}: {detail}");
}

fn opts() -> RhsOptions {
    RhsOptions {
        accuracy: 8,
        interp: Interpolation::with_points(8, Boundary::ZeroPad),
        quad_nodes: 32,
    }
}

/// Damped oscillator with a field coupling of both quadratures and, optionally,
/// a Gaussian bump in the position.
fn oscillator(potential: bool) -> EnergySpec {
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

fn initial() -> GaussianState {
    GaussianState::new(Vector::from_vec(vec![0.3, -0.2]), Mat::from_row_slice(2, 2, &[1.2, 0.2, 0.2, 1.0])).unwrap()
}

fn fig1_spec() -> EnergySpec {
    let mut r = Mat::identity(4, 4);
    r[(0, 0)] = 0.2;
    r[(0, 1)] = -0.1;
    r[(1, 0)] = -0.1;
    r[(1, 1)] = 0.4;
    let term = GaussianPotentialTerm::new(1.5, vec![2.0, 3.0], Mat::from_row_slice(2, 2, &[6.0, 1.0, 1.0, 4.0]), vec![0, 1]).unwrap();
    EnergySpec::new(Vector::zeros(4), r, Mat::identity(4, 4) * 0.5, vec![term])
}

fn run(phi0: &GridFunction, rhs: &Rhs, scheme: Scheme, dt: f64, t_end: f64, every: usize) -> Trajectory {
    let cfg = EvolutionConfig { dt, t_end, scheme, snapshot_every: every, ..Default::default() };
    evolve(phi0, rhs, &cfg).unwrap()
}

#[test]
fn gaussian_exactness() {
    let sym = SymplecticData::standard(2, 2).unwrap();
    let spec = oscillator(false);
    let d = compute_linear_dynamics(&spec, &sym).unwrap();
    let grid = Grid::cube(2, 129, 8.0).unwrap();
    let phi0 = initial().sample_qcf(&grid);
    let rhs = Rhs::qcf_linear_coupling(&spec, &sym, opts()).unwrap();
    let mut worst = [0.0f64; 2];
    for (k, scheme) in [Scheme::Rk4Lines, Scheme::StrangSplit].into_iter().enumerate() {
        let tr = run(&phi0, &rhs, scheme, 0.004, 1.0, 25);
        assert!(tr.aborted.is_none());
        for s in &tr.snapshots {
            let exact = propagate_gaussian(&d, &initial(), s.time).sample_qcf(&grid);
            worst[k] = worst[k].max(s.max_abs_diff(&exact) / exact.max_abs());
        }
    }
    verdict(
        "gaussian exactness (129², t ≤ 1)",
        worst.iter().all(|&e| e <= 1e-6),
        format!("max relative error rk4_lines {:.2e}, strang_split {:.2e} (tol 1e-6)", worst[0], worst[1]),
    );
}

#[test]
fn moment_consistency() {
    let sym = SymplecticData::standard(2, 2).unwrap();
    let spec = oscillator(false);
    let d = compute_linear_dynamics(&spec, &sym).unwrap();
    let grid = Grid::cube(2, 129, 8.0).unwrap();
    let rhs = Rhs::qcf_linear_coupling(&spec, &sym, opts()).unwrap();
    let tr = run(&initial().sample_qcf(&grid), &rhs, Scheme::Rk4Lines, 0.004, 1.0, 25);
    let tt = TildeTheta::zero(2);
    let mut extracted: f64 = 0.0;
    let mut gramian: f64 = 0.0;
    for s in &tr.snapshots {
        let (mu, sigma) = mean_and_covariance(s, &tt, 8).unwrap();
        let ode = integrate_moment_odes(&d, &initial(), s.time, 1e-3);
        let dm = (0..2).map(|i| (mu[i] - ode.mu[i]).abs()).fold(0.0, f64::max);
        extracted = extracted.max(dm).max((&sigma - &ode.sigma).amax());
        let closed = propagate_gaussian(&d, &initial(), s.time);
        gramian = gramian.max((&closed.sigma - &ode.sigma).amax()).max((&closed.mu - &ode.mu).amax());
    }
    // Steady state: residual, and agreement with a Kronecker-product solve.
    let ss = steady_state(&d).unwrap();
    let q = d.diffusion();
    let eye = Mat::identity(2, 2);
    let kron = d.a.kronecker(&eye) + eye.kronecker(&d.a);
    let vec_q = Vector::from_iterator(4, q.transpose().iter().map(|v| -v));
    let vec_s = kron.lu().solve(&vec_q).unwrap();
    let dense = Mat::from_column_slice(2, 2, vec_s.as_slice());
    let oracle = (&ss.state.sigma - dense).amax();
    verdict(
        "moment consistency",
        extracted <= 1e-5 && ss.lyapunov_residual <= 1e-10 && gramian <= 1e-8 && oracle <= 1e-10,
        format!(
            "QCF moments vs moment ODEs {extracted:.2e} (tol 1e-5), Lyapunov residual {:.2e} (tol 1e-10), \
             Gramian vs ODE {gramian:.2e} (tol 1e-8), Σ₀ vs Kronecker solve {oracle:.2e}",
            ss.lyapunov_residual
        ),
    );
}

#[test]
fn normalization_and_symmetry() {
    let sym = SymplecticData::standard(2, 2).unwrap();
    let grid = Grid::cube(2, 129, 8.0).unwrap();
    let phi0 = initial().sample_qcf(&grid);
    let mut qcf_norm: f64 = 0.0;
    let mut qcf_sym: f64 = 0.0;
    let mut runs = 0;
    for potential in [false, true] {
        let spec = oscillator(potential);
        let mut rhss = vec![Rhs::qcf_linear_coupling(&spec, &sym, opts()).unwrap()];
        if potential {
            rhss.push(Rhs::qcf_general(&spec, &sym, &grid, opts()).unwrap());
        }
        for rhs in &rhss {
            for scheme in [Scheme::Rk4Lines, Scheme::StrangSplit] {
                let tr = run(&phi0, rhs, scheme, 0.004, 1.0, 25);
                assert!(tr.aborted.is_none());
                runs += 1;
                for s in &tr.invariants {
                    qcf_norm = qcf_norm.max(s.normalization);
                    qcf_sym = qcf_sym.max(s.symmetry);
                }
            }
        }
    }
    let xgrid = Grid::cube(2, 97, 9.0).unwrap();
    let mho0 = initial().sample_qpdf(&xgrid).unwrap();
    let mut mass_rate: f64 = 0.0;
    let mut qpdf_imag: f64 = 0.0;
    for potential in [false, true] {
        let rhs = Rhs::qpdf_linear_coupling(&oscillator(potential), &sym, opts()).unwrap();
        let tr = run(&mho0, &rhs, Scheme::Rk4Lines, 0.005, 1.0, 10);
        assert!(tr.aborted.is_none());
        runs += 1;
        let m0 = tr.invariants[0].normalization;
        for s in tr.invariants.iter().skip(1) {
            mass_rate = mass_rate.max((s.normalization - m0).abs() / s.t);
            qpdf_imag = qpdf_imag.max(s.symmetry);
        }
    }
    verdict(
        "normalization and Hermitian symmetry",
        qcf_norm <= 1e-6 && mass_rate <= 1e-6 && qcf_sym <= 1e-10 && qpdf_imag <= 1e-10,
        format!(
            "{runs} trajectories: |Φ(t,0)−1| ≤ {qcf_norm:.2e}, QPDF mass drift {mass_rate:.2e}/unit time (tol 1e-6), \
             Hermitian residual {qcf_sym:.2e}, QPDF imaginary part {qpdf_imag:.2e} (tol 1e-10)"
        ),
    );
}

/// `−2∫Π(x,v)℧₀(x − ΘZᵀv)dv` by a trapezoid rule over `v ∈ [−L, L]^d`.
fn moyal_quadrature(state: &GaussianState, term: &GaussianPotentialTerm, sym: &SymplecticData, x: &[f64], h: f64, half: i64) -> f64 {
    let prep = term.prepare();
    let dens = state.density().unwrap();
    let d = term.d();
    let n = sym.n;
    let mut acc = 0.0;
    let mut idx = vec![-half; d];
    let mut y = vec![0.0; n];
    loop {
        let v: Vec<f64> = idx.iter().map(|&k| k as f64 * h).collect();
        let shift = linalg::mat_vec(&sym.theta, &term.lift(&v, n));
        for i in 0..n {
            y[i] = x[i] - shift[i];
        }
        acc += kernel_pi(x, &v, &prep) * dens.eval(&y);
        let mut axis = 0;
        loop {
            if axis == d {
                return -2.0 * acc * h.powi(d as i32);
            }
            idx[axis] += 1;
            if idx[axis] <= half {
                break;
            }
            idx[axis] = -half;
            axis += 1;
        }
    }
}

fn moyal_case(state: &GaussianState, term: &GaussianPotentialTerm, sym: &SymplecticData, h: f64, half: i64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sym.n;
    let sd: Vec<f64> = (0..n).map(|i| state.sigma[(i, i)].sqrt()).collect();
    let mut pairs = Vec::with_capacity(100);
    for _ in 0..100 {
        let x: Vec<f64> = (0..n).map(|i| state.mu[i] + sd[i] * rng.random_range(-3.0..3.0)).collect();
        let a = moyal_image_of_gaussian(state, term, sym, &x).unwrap();
        let b = moyal_quadrature(state, term, sym, &x, h, half);
        pairs.push((a, b));
    }
    let peak = pairs.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    // Relative error with a floor at 1e-3 of the largest sampled value, so
    // that nodal points of the image do not dominate.
    let rel = pairs.iter().map(|(a, b)| (a - b).abs() / b.abs().max(1e-3 * peak)).fold(0.0, f64::max);
    (rel, peak)
}

#[test]
fn closed_form_moyal_image() {
    let sym2 = SymplecticData::standard(2, 2).unwrap();
    let st2 = GaussianState::new(Vector::from_vec(vec![0.4, -0.3]), Mat::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.8])).unwrap();
    let term2 = GaussianPotentialTerm::new(0.7, vec![0.9], Mat::identity(1, 1) * 2.0, vec![0]).unwrap();
    let (rel2, _) = moyal_case(&st2, &term2, &sym2, 0.01, 2000, 11);

    let sym4 = SymplecticData::standard(4, 4).unwrap();
    let spec = fig1_spec();
    let st4 = steady_state(&compute_linear_dynamics(&spec, &sym4).unwrap()).unwrap().state;
    let (rel4, _) = moyal_case(&st4, &spec.potential_terms[0], &sym4, 0.05, 240, 12);
    verdict(
        "closed-form Moyal image",
        rel2 <= 1e-6 && rel4 <= 1e-6,
        format!("100 random points each: n=2/d=1 relative error {rel2:.2e}, n=4/d=2 (Fig.-1 set) {rel4:.2e} (tol 1e-6)"),
    );
}

#[test]
fn general_kernel_matches_linear_coupling() {
    let sym = SymplecticData::standard(2, 2).unwrap();
    let grid = Grid::cube(2, 129, 8.0).unwrap();
    let two_terms = EnergySpec::new(
        Vector::from_vec(vec![0.1, 0.0]),
        Mat::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.6]),
        Mat::from_row_slice(2, 2, &[0.6, 0.1, -0.2, 0.5]),
        vec![
            GaussianPotentialTerm::new(0.6, vec![0.3], Mat::identity(1, 1), vec![0]).unwrap(),
            GaussianPotentialTerm::new(0.4, vec![-0.2], Mat::identity(1, 1) * 1.5, vec![1]).unwrap(),
        ],
    );
    let states = [
        GaussianState::new(Vector::from_vec(vec![0.2, 0.1]), Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.3])).unwrap(),
        GaussianState::new(Vector::from_vec(vec![-0.4, 0.3]), Mat::from_row_slice(2, 2, &[0.8, -0.1, -0.1, 0.9])).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for spec in [oscillator(true), two_terms] {
        for st in &states {
            let phi = st.sample_qcf(&grid);
            let a = qcf_rhs_general(&phi, &spec, &sym, opts()).unwrap();
            let b = qcf_rhs_linear_coupling(&phi, &spec, &sym, opts()).unwrap();
            worst = worst.max(a.max_abs_diff(&b));
        }
    }
    verdict(
        "general kernel vs linear-coupling right-hand side",
        worst <= 1e-6,
        format!("max difference {worst:.2e} on 129² (tol 1e-6)"),
    );
}

#[test]
fn invariant_series_first_order() {
    let sym = SymplecticData::standard(2, 2).unwrap();
    let term = GaussianPotentialTerm::new(1.0, vec![0.5], Mat::identity(1, 1) * 2.0, vec![0]).unwrap();
    let spec = EnergySpec::new(
        Vector::from_vec(vec![0.1, 0.0]),
        Mat::from_row_slice(2, 2, &[0.6, 0.1, 0.1, 0.5]),
        Mat::identity(2, 2) * 0.6,
        vec![term],
    );
    let cfg = SeriesConfig {
        order: 1,
        time: TimeQuadrature { tol: 1e-10, ..Default::default() },
        rhs: opts(),
        residual_margin: None,
        tol_tail: 1e-8,
    };
    let x_grid = Grid::cube(2, 129, 8.0).unwrap();
    let u_grid = dual_grid(&x_grid).unwrap();
    let st = invariant_series(&spec, &sym, Some(&u_grid), Some(&x_grid), &cfg).unwrap();
    let (phi1, mho1) = (&st.qcf_terms[1], &st.qpdf_terms[1]);
    let (ft, _) = qcf_to_qpdf(phi1, 1e-6).unwrap();
    let pair = ft.max_abs_diff(mho1);
    let mass = mho1.integral().norm();
    let (rq, rp) = (st.qcf_residuals[0], st.qpdf_residuals[0]);
    verdict(
        "invariant series, first order",
        rq <= 1e-4 && rp <= 1e-4 && pair <= 1e-4 && mass <= 1e-6,
        format!(
            "QCF residual {rq:.2e}, QPDF residual {rp:.2e}, Fourier pair {pair:.2e} (tol 1e-4), ∫℧₁ {mass:.2e} (tol 1e-6)"
        ),
    );
}

#[test]
fn chi2_machinery() {
    let sym = SymplecticData::standard(2, 2).unwrap();
    let g = Grid::cube(2, 129, 10.0).unwrap();
    let truth = GaussianState::new(Vector::from_vec(vec![0.4, -0.3]), Mat::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.9])).unwrap();
    let init = GaussianState::new(Vector::zeros(2), Mat::identity(2, 2) * 1.1).unwrap();
    let fit = fit_gaussian(&truth.sample_qpdf(&g).unwrap(), &init, &sym.theta, &FitOptions::default()).unwrap();
    let got = fit.state().unwrap();
    let recover = (&got.mu - &truth.mu).amax().max((&got.sigma - &truth.sigma).amax());

    // Gradients against central differences at a non-Gaussian density.
    let target = GaussianState::new(Vector::from_vec(vec![0.2, -0.1]), Mat::from_row_slice(2, 2, &[0.9, 0.2, 0.2, 0.7])).unwrap();
    let mho = GridFunction::from_fn(g.clone(), GridKind::Qpdf, |x| {
        Complex64::new(target.qpdf(x).unwrap() * (1.0 + 0.1 * x[0] * x[1]), 0.0)
    });
    let reference = GaussianState::new(Vector::from_vec(vec![0.1, 0.1]), Mat::from_row_slice(2, 2, &[1.2, 0.1, 0.1, 1.0])).unwrap();
    let (gm, gs) = chi2_gradients(&mho, &reference, 1e-8).unwrap();
    let div = |r: &GaussianState| chi2_divergence(&mho, r, 1e-8).unwrap().divergence;
    let h = 1e-4;
    let mut grad_err: f64 = 0.0;
    for i in 0..2 {
        let (mut p, mut m) = (reference.clone(), reference.clone());
        p.mu[i] += h;
        m.mu[i] -= h;
        grad_err = grad_err.max(((div(&p) - div(&m)) / (2.0 * h) - gm[i]).abs());
    }
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let mut dir = Mat::zeros(2, 2);
        dir[(i, j)] = 1.0;
        dir[(j, i)] = 1.0;
        let p = GaussianState::new(reference.mu.clone(), &reference.sigma + &dir * h).unwrap();
        let m = GaussianState::new(reference.mu.clone(), &reference.sigma - &dir * h).unwrap();
        let fd = (div(&p) - div(&m)) / (2.0 * h);
        grad_err = grad_err.max((fd - gs.component_mul(&dir).sum()).abs());
    }

    // Dirichlet inequality on 20 test functions: 5 multiples of the weight
    // itself and 15 deformations of it.
    let st = GaussianState::new(Vector::from_vec(vec![0.2, -0.1]), Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8])).unwrap();
    let dg = Grid::cube(2, 129, 9.0).unwrap();
    let shifted = GaussianState::new(Vector::from_vec(vec![0.5, 0.1]), st.sigma.clone()).unwrap();
    let narrow = GaussianState::new(st.mu.clone(), &st.sigma * 0.8).unwrap();
    let deformations: Vec<Box<dyn Fn(&[f64]) -> f64 + Sync>> = vec![
        Box::new(|x| 1.0 + 0.1 * x[0]),
        Box::new(|x| 1.0 - 0.2 * x[1]),
        Box::new(|x| 1.0 + 0.1 * x[0] * x[1]),
        Box::new(|x| 1.0 + 0.05 * x[0] * x[0]),
        Box::new(|x| 0.5 - 0.1 * x[1] * x[1]),
        Box::new(|x| x[0]),
        Box::new(|x| x[0] - 2.0 * x[1]),
        Box::new(|x| 1.0 + 0.02 * x[0].powi(3)),
        Box::new(|x| (0.7 * x[0]).cos()),
        Box::new(|x| (0.5 * x[1]).sin() + 0.5),
        Box::new(|x| 1.0 / (1.0 + x[0] * x[0])),
        Box::new(|x| (0.3 * x[0] - 0.2 * x[1]).tanh()),
        Box::new(|x| 1.0 + 0.3 * (-x[1] * x[1]).exp()),
    ];
    let mut phis: Vec<(bool, GridFunction)> = Vec::new();
    for c in [1.0, -0.5, 3.0, 0.2, -2.0] {
        phis.push((true, GridFunction::from_fn(dg.clone(), GridKind::Generic, |x| Complex64::new(c * st.qpdf(x).unwrap(), 0.0))));
    }
    for f in &deformations {
        phis.push((false, GridFunction::from_fn(dg.clone(), GridKind::Generic, |x| Complex64::new(st.qpdf(x).unwrap() * f(x), 0.0))));
    }
    for other in [&shifted, &narrow] {
        phis.push((false, GridFunction::from_fn(dg.clone(), GridKind::Generic, |x| Complex64::new(other.qpdf(x).unwrap(), 0.0))));
    }
    assert_eq!(phis.len(), 20);
    let mut min_gap = f64::INFINITY;
    let mut equality_ok = true;
    let mut smallest_strict = f64::INFINITY;
    for (gaussian, phi) in &phis {
        let r = dirichlet_check(phi, &st, 8, 1e-8).unwrap();
        min_gap = min_gap.min(r.min_gap);
        if *gaussian {
            equality_ok &= r.is_equality(1e-8);
        } else {
            equality_ok &= !r.is_equality(1e-8);
            smallest_strict = smallest_strict.min(r.max_gap);
        }
    }
    verdict(
        "χ² fit, gradients and Dirichlet inequality",
        recover <= 1e-8 && fit.divergence <= 1e-8 && grad_err <= 1e-5 && min_gap >= -1e-8 && equality_ok,
        format!(
            "fit error {recover:.2e}, D {:.2e} (tol 1e-8); gradient vs finite differences {grad_err:.2e} (tol 1e-5); \
             20 test functions: min gap {min_gap:.2e} (≥ −1e-8), equality exactly for the 5 Gaussians {equality_ok}, \
             smallest non-Gaussian gap {smallest_strict:.2e}",
            fit.divergence
        ),
    );
}

#[test]
fn dissipation_balances() {
    let sym = SymplecticData::standard(2, 2).unwrap();
    // Norm relation along a QCF trajectory with P(0) = 0.
    let rhs = Rhs::qcf_linear_coupling(&oscillator(false), &sym, opts()).unwrap();
    let phi0 = initial().sample_qcf(&Grid::cube(2, 97, 10.0).unwrap());
    let norm_res: Vec<f64> = [4, 2, 1]
        .iter()
        .map(|&every| {
            let tr = run(&phi0, &rhs, Scheme::Rk4Lines, 0.005, 0.4, every);
            dissipation_balance(&tr, &rhs, &Mat::zeros(2, 2), 1e-8).unwrap().max_residual
        })
        .collect();

    // χ² relation along a QPDF trajectory against a mismatched fixed reference.
    let spec = EnergySpec::new(
        Vector::from_vec(vec![0.1, -0.05]),
        Mat::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.6]),
        Mat::identity(2, 2) * 0.7,
        vec![],
    );
    let qrhs = Rhs::qpdf_linear_coupling(&spec, &sym, opts()).unwrap();
    let start = GaussianState::new(Vector::from_vec(vec![0.3, -0.2]), Mat::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.8])).unwrap();
    let mho0 = start.sample_qpdf(&Grid::cube(2, 97, 9.0).unwrap()).unwrap();
    let reference = GaussianState::new(Vector::from_vec(vec![0.1, 0.0]), Mat::identity(2, 2) * 1.1).unwrap();
    let chi_res: Vec<f64> = [8, 4, 2]
        .iter()
        .map(|&every| {
            let tr = run(&mho0, &qrhs, Scheme::Rk4Lines, 0.005, 0.2, every);
            dissipation_chi2(&tr, &qrhs, &RefPath::Fixed(reference.clone()), 1e-8).unwrap().max_residual
        })
        .collect();
    let order = |r: &[f64]| (r[0] / r[1]).log2().min((r[1] / r[2]).log2());
    let (pn, pc) = (order(&norm_res), order(&chi_res));
    verdict(
        "dissipation balances",
        norm_res[2] <= 1e-4 && chi_res[2] <= 1e-3 && pn >= 1.5 && pc >= 1.5,
        format!(
            "norm relation residuals {:.2e} → {:.2e} → {:.2e} (tol 1e-4, order {pn:.2}); \
             χ² relation {:.2e} → {:.2e} → {:.2e} (tol 1e-3, order {pc:.2}); required order ≥ 1.5",
            norm_res[0], norm_res[1], norm_res[2], chi_res[0], chi_res[1], chi_res[2]
        ),
    );
}

#[test]
fn classical_limit_algebra_and_monte_carlo() {
    let mut canon = 0.0f64;
    let mut antisym = 0.0f64;
    for (n, m, seed) in [(2, 2, 101), (4, 4, 102), (4, 2, 103)] {
        let xi = linalg::symplectic_unit(n);
        let ups = linalg::symplectic_unit(m);
        let nc = Mat::from_fn(m, n, |i, j| 0.3 + 0.1 * (i as f64) - 0.2 * (j as f64));
        let energy = EnergySpec::new(Vector::zeros(n), Mat::identity(n, n), nc, vec![]);
        let spec = ClassicalSpec::new(&xi, &ups, energy, 1.0).unwrap();
        let samples = random_canonical_samples(n, m, 10_000, seed);
        let rep = canonical_identity_check(&spec, &samples);
        canon = canon.max(rep.can1_max_rel).max(rep.phi_midpoint_max_rel);
        // φ(s − r, s, u, v) = −φ(r, s, u, v)
        antisym = antisym.max(rep.phi_max_rel);
        assert!(samples.iter().any(|s| phi(&xi, &s.r, &s.s, &s.u, &s.v).abs() > 1e-3));
    }

    let energy = EnergySpec::new(
        Vector::from_vec(vec![0.2, -0.1]),
        Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 0.8]),
        Mat::from_row_slice(2, 2, &[0.7, 0.0, 0.2, 0.6]),
        vec![],
    );
    let spec = ClassicalSpec::new(&linalg::symplectic_unit(2), &linalg::symplectic_unit(2), energy, 1.0).unwrap();
    let init = GaussianState::new(Vector::from_vec(vec![1.0, -0.5]), Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4])).unwrap();
    let cfg = SdeConfig { dt: 1e-3, t_end: 1.0, paths: 10_000, seed: 20240611, record_every: 100 };
    let ic = InitialCondition::gaussian(&init);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let two = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let mc = one.install(|| simulate_sde(&spec, &ic, &cfg).unwrap());
    let again = two.install(|| simulate_sde(&spec, &ic, &cfg).unwrap());
    let identical = mc == again;
    let dyn_ = spec.linear_dynamics().unwrap();
    let mut zmax = 0.0f64;
    for (k, &t) in mc.times.iter().enumerate().skip(1) {
        let ode = integrate_moment_odes(&dyn_, &init, t, 1e-3);
        for i in 0..2 {
            zmax = zmax.max(((mc.mean[k][i] - ode.mu[i]) / mc.mean_se[k][i]).abs());
            for j in i..2 {
                zmax = zmax.max(((mc.cov[k][i * 2 + j] - ode.sigma[(i, j)]) / mc.cov_se[k][i * 2 + j]).abs());
            }
        }
    }
    verdict(
        "classical-limit algebra and Monte Carlo moments",
        canon <= 1e-12 && antisym <= 1e-12 && zmax < 3.0 && identical,
        format!(
            "3×10⁴ samples: bracket identities {canon:.2e}, φ antisymmetry {antisym:.2e} (tol 1e-12); \
             10⁴ paths, {} recorded times: max |z| {zmax:.2} (< 3), bit-identical across thread counts {identical}",
            mc.times.len() - 1
        ),
    );
}

#[test]
fn self_convergence_in_time() {
    let sym = SymplecticData::standard(2, 2).unwrap();
    let grid = Grid::cube(2, 65, 8.0).unwrap();
    let phi0 = initial().sample_qcf(&grid);
    let rhs = Rhs::qcf_linear_coupling(&oscillator(true), &sym, opts()).unwrap();
    let bound = stability_bound(&phi0, &rhs, 0.5);
    let dt0 = [0.04, 0.02, 0.01, 0.005, 0.0025].into_iter().find(|&d| d <= bound).unwrap();
    let finals: Vec<GridFunction> = (0..3)
        .map(|k| {
            let dt = dt0 / f64::from(1 << k);
            let tr = run(&phi0, &rhs, Scheme::Rk4Lines, dt, 0.8, usize::MAX);
            tr.last().clone()
        })
        .collect();
    let e1 = finals[0].max_abs_diff(&finals[1]);
    let e2 = finals[1].max_abs_diff(&finals[2]);
    let order = (e1 / e2).log2();
    verdict(
        "self-convergence under dt halving (rk4_lines, Gaussian potential)",
        order >= 3.5,
        format!("dt {dt0}, {}, {}: differences {e1:.2e}, {e2:.2e}, observed order {order:.2} (≥ 3.5)", dt0 / 2.0, dt0 / 4.0),
    );
}
