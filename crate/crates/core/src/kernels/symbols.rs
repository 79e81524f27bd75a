//! Weyl symbols of the drift and dispersion, the QCF evolution kernel `V`
//! and the QPDF kernel `Π`.
//!
//! Only the regular (Gaussian-mixture) parts are sampled here. The
//! delta-derivative parts from the quadratic Hamiltonian and the linear
//! coupling are carried by [`LinearDynamics`](super::LinearDynamics).

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Result, WeylError};
use crate::kernels::auxiliary::{sinc, CMat};
use crate::kernels::energy::{EnergySpec, PreparedTerm};
use crate::linalg;
use crate::phase::symplectic::SymplecticData;

pub type CVector = DVector<Complex64>;

/// `2iΘ w` scaled by a complex factor.
fn two_i_theta(sym: &SymplecticData, w: &[f64], factor: Complex64) -> CVector {
    let tw = linalg::mat_vec(&sym.theta, w);
    let c = Complex64::new(0.0, 2.0) * factor;
    CVector::from_iterator(tw.len(), tw.into_iter().map(|t| c * t))
}

fn check_full(spec: &EnergySpec) -> Result<()> {
    let n = spec.n();
    if let Some(t) = spec.potential_terms.iter().find(|t| t.d() < n) {
        return Err(WeylError::Unsupported(format!(
            "potential term on {} of {n} axes has a symbol supported on a subspace; \
             evaluate it on its support instead",
            t.d()
        )));
    }
    Ok(())
}

/// Regular part of `H₀` at `u` for full-dimensional terms: `Σ H̃₀(Z u)`.
pub fn h0_regular(u: &[f64], spec: &EnergySpec) -> Result<Complex64> {
    check_full(spec)?;
    Ok(spec
        .potential_terms
        .iter()
        .map(|t| t.prepare().h0(&t.select(u)))
        .sum())
}

/// Regular part of the drift symbol, `F(u) = 2iΘ H₀(u) u`.
pub fn symbol_f(u: &[f64], spec: &EnergySpec, sym: &SymplecticData) -> Result<CVector> {
    let h = h0_regular(u, spec)?;
    Ok(two_i_theta(sym, u, h))
}

/// Density of `F` on the support `s = Zᵀv` of one potential term.
pub fn symbol_f_on_support(v: &[f64], term: &PreparedTerm, sym: &SymplecticData) -> CVector {
    let s = term.term.lift(v, sym.n);
    two_i_theta(sym, &s, term.h0(v))
}

/// Regular part of the dispersion symbol. Linear coupling has no regular
/// part, so this is identically zero for every supported spec.
pub fn symbol_g(_u: &[f64], spec: &EnergySpec, sym: &SymplecticData) -> CMat {
    CMat::zeros(spec.n(), sym.m)
}

/// `V(u, s) = i sinc(uᵀΘs) uᵀF(s)` for full-dimensional terms (the `G` part
/// vanishes for linear coupling).
pub fn kernel_v(u: &[f64], s: &[f64], spec: &EnergySpec, sym: &SymplecticData) -> Result<Complex64> {
    let f = symbol_f(s, spec, sym)?;
    Ok(v_from_f(u, s, &f, sym))
}

/// Density of `V(u, ·)` at `s = Zᵀv` on the support of one term.
pub fn kernel_v_on_support(u: &[f64], v: &[f64], term: &PreparedTerm, sym: &SymplecticData) -> Complex64 {
    let s = term.term.lift(v, sym.n);
    let f = symbol_f_on_support(v, term, sym);
    v_from_f(u, &s, &f, sym)
}

fn v_from_f(u: &[f64], s: &[f64], f: &CVector, sym: &SymplecticData) -> Complex64 {
    let uf: Complex64 = u.iter().zip(f.iter()).map(|(a, b)| b * a).sum();
    Complex64::new(0.0, sinc(sym.form(u, s))) * uf
}

/// `Π(x, v) = Im(H̃₀(v) e^{ivᵀZx})`.
pub fn kernel_pi(x: &[f64], v: &[f64], term: &PreparedTerm) -> f64 {
    let q = term.term.select(x);
    (term.h0(v) * Complex64::from_polar(1.0, linalg::dot(v, &q))).im
}

/// `Π(x, v)` with the Gaussian weight `exp(−½‖v‖²_{Λ⁻¹})` removed.
pub fn kernel_pi_over_envelope(x: &[f64], v: &[f64], term: &PreparedTerm) -> f64 {
    let q = term.term.select(x);
    let arg: f64 = v.iter().zip(q.iter().zip(&term.term.gamma)).map(|(vi, (qi, gi))| vi * (gi - qi)).sum();
    term.amplitude * arg.sin()
}
