//! Gaussian parameters of the linear flow: moment ODEs, Gramians and the
//! invariant Gaussian state.

use crate::error::{Result, WeylError};
use crate::kernels::LinearDynamics;
use crate::linalg::{self, Mat, Vector};
use crate::phase::gaussian::GaussianState;

/// RK4 integration of `μ̇ = Aμ + 2Θb`, `Σ̇ = AΣ + ΣAᵀ + BBᵀ` up to time `t`
/// with steps no longer than `dt`. `Σ` is symmetrized after every step.
pub fn integrate_moment_odes(dyn_: &LinearDynamics, init: &GaussianState, t: f64, dt: f64) -> GaussianState {
    let steps = if t <= 0.0 { 0 } else { (t / dt).ceil().max(1.0) as usize };
    let h = if steps == 0 { 0.0 } else { t / steps as f64 };
    let q = dyn_.diffusion();
    let a = &dyn_.a;
    let fmu = |m: &Vector| a * m + &dyn_.drift_const;
    let fsig = |s: &Mat| a * s + s * a.transpose() + &q;
    let mut mu = init.mu.clone();
    let mut sig = init.sigma.clone();
    for _ in 0..steps {
        let k1 = fmu(&mu);
        let k2 = fmu(&(&mu + &k1 * (0.5 * h)));
        let k3 = fmu(&(&mu + &k2 * (0.5 * h)));
        let k4 = fmu(&(&mu + &k3 * h));
        mu += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let l1 = fsig(&sig);
        let l2 = fsig(&(&sig + &l1 * (0.5 * h)));
        let l3 = fsig(&(&sig + &l2 * (0.5 * h)));
        let l4 = fsig(&(&sig + &l3 * h));
        sig += (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
        sig = linalg::symmetrize(&sig);
    }
    GaussianState { mu, sigma: sig }
}

/// `∫₀ᵗ e^{sA} Q e^{sAᵀ} ds` from one block exponential (Van Loan).
pub fn gramian(a: &Mat, q: &Mat, t: f64) -> Mat {
    let n = a.nrows();
    let mut big = Mat::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-a));
    big.view_mut((0, n), (n, n)).copy_from(q);
    big.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = linalg::expm(&(big * t));
    let f12 = e.view((0, n), (n, n)).clone_owned();
    let f22 = e.view((n, n), (n, n)).clone_owned();
    linalg::symmetrize(&(f22.transpose() * f12))
}

/// `∫₀ᵗ e^{sA} ds · c`.
pub fn mean_integral(a: &Mat, c: &Vector, t: f64) -> Vector {
    let n = a.nrows();
    let mut big = Mat::zeros(n + 1, n + 1);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, 1)).copy_from(c);
    let e = linalg::expm(&(big * t));
    e.view((0, n), (n, 1)).clone_owned().column(0).into_owned()
}

/// Zero-initial-condition solution `(μ(t), Σ(t))` parameterizing the linear flow.
pub fn flow_parameters(dyn_: &LinearDynamics, t: f64) -> GaussianState {
    GaussianState {
        mu: mean_integral(&dyn_.a, &dyn_.drift_const, t),
        sigma: gramian(&dyn_.a, &dyn_.diffusion(), t),
    }
}

/// Gaussian parameters after time `t` from a Gaussian initial state.
pub fn propagate_gaussian(dyn_: &LinearDynamics, init: &GaussianState, t: f64) -> GaussianState {
    let e = linalg::expm(&(&dyn_.a * t));
    let p = flow_parameters(dyn_, t);
    GaussianState {
        mu: &e * &init.mu + p.mu,
        sigma: linalg::symmetrize(&(&e * &init.sigma * e.transpose() + p.sigma)),
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub state: GaussianState,
    pub lyapunov_residual: f64,
    pub controllable: bool,
    /// `Σ₀` is numerically singular (uncontrollable pair).
    pub singular: bool,
}

/// `μ₀ = −2A⁻¹Θb` and the solution of `AΣ₀ + Σ₀Aᵀ + BBᵀ = 0`.
pub fn steady_state(dyn_: &LinearDynamics) -> Result<SteadyState> {
    let abscissa = dyn_.spectral_abscissa();
    if abscissa >= -1e-12 {
        return Err(WeylError::NotHurwitz { abscissa });
    }
    let q = dyn_.diffusion();
    let sigma = linalg::solve_lyapunov(&dyn_.a, &q)?;
    let a_inv = linalg::inverse(&dyn_.a, "A")?;
    let mu = -(a_inv * &dyn_.drift_const);
    let lyapunov_residual = linalg::lyapunov_residual(&dyn_.a, &sigma, &q);
    let n = dyn_.n();
    let controllable = linalg::controllability_rank(&dyn_.a, &dyn_.b_disp, 1e-10) == n;
    let singular = linalg::min_eigenvalue_sym(&sigma) <= 1e-12 * linalg::max_abs(&sigma).max(1e-300);
    if singular {
        log::warn!("steady-state covariance is singular: the pair (A, B) is not controllable");
    }
    Ok(SteadyState {
        state: GaussianState { mu, sigma },
        lyapunov_residual,
        controllable,
        singular,
    })
}
