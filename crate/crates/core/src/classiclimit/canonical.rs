//! Pointwise checks of the algebraic identities behind the canonical
//! (Poisson-bracket preserving) form of the limit flow.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classiclimit::spec::ClassicalSpec;
use crate::linalg::Mat;

/// Arguments `(r, s, u, v)` and a value `H(s)` of the coupling's Fourier
/// transform. The identities are algebraic in `H`, so any complex vector will do.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSample {
    pub r: Vec<f64>,
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub h: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalReport {
    pub samples: usize,
    /// Largest `|(sᵀΞv uᵀ + uᵀΞs vᵀ)G₀(s)|` relative to its rounding scale.
    pub can1_max_rel: f64,
    /// Largest `|φ(r,s,u,v) + φ(s−r,s,u,v)|` relative to its rounding scale.
    pub phi_max_rel: f64,
    /// Largest relative `|φ(s/2,s,u,v)|`.
    pub phi_midpoint_max_rel: f64,
    /// `Υ = 0`, the setting in which the canonical form applies.
    pub field_form_vanishes: bool,
}

impl CanonicalReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.can1_max_rel <= tol && self.phi_max_rel <= tol && self.phi_midpoint_max_rel <= tol
    }
}

pub fn random_canonical_samples(n: usize, m: usize, count: usize, seed: u64) -> Vec<CanonicalSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vec = |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut rng)).collect() };
    (0..count)
        .map(|_| {
            let (r, s, u, v) = (vec(n), vec(n), vec(n), vec(n));
            let (hr, hi) = (vec(m), vec(m));
            let h = hr.into_iter().zip(hi).map(|(a, b)| Complex64::new(a, b)).collect();
            CanonicalSample { r, s, u, v, h }
        })
        .collect()
}

/// `aᵀΞb` and its componentwise magnitude `|a|ᵀ|Ξ||b|`.
struct Form<'a> {
    xi: &'a Mat,
}

impl Form<'_> {
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        (0..n).map(|i| a[i] * (0..n).map(|j| self.xi[(i, j)] * b[j]).sum::<f64>()).sum()
    }

    fn abs(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        (0..n).map(|i| a[i].abs() * (0..n).map(|j| self.xi[(i, j)].abs() * b[j].abs()).sum::<f64>()).sum()
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn abs_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x.abs() + y.abs()).collect()
}

/// `(sᵀΞv uᵀ + uᵀΞs vᵀ)G₀(s)` with `G₀(s) = iΞsH(s)ᵀ`, and its rounding scale.
fn can1(f: &Form, p: &CanonicalSample) -> (f64, f64) {
    let (s, u, v) = (&p.s, &p.u, &p.v);
    let (a, b) = (f.eval(s, v), f.eval(u, s));
    let w: Vec<f64> = u.iter().zip(v).map(|(x, y)| a * x + b * y).collect();
    let wa: Vec<f64> = u.iter().zip(v).map(|(x, y)| (a * x).abs() + (b * y).abs()).collect();
    let row = f.eval(&w, s);
    let scale = f.abs(&wa, s) + (a.abs() * f.abs(u, s) + b.abs() * f.abs(v, s));
    let hmax = p.h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    // row · iH(s)ᵀ
    let res = p.h.iter().map(|z| (Complex64::i() * z * row).norm()).fold(0.0, f64::max);
    (res, scale * hmax)
}

/// `φ(r, s, u, v)` and its componentwise magnitude.
pub fn phi(xi: &Mat, r: &[f64], s: &[f64], u: &[f64], v: &[f64]) -> f64 {
    phi_with_scale(&Form { xi }, r, s, u, v).0
}

fn phi_with_scale(f: &Form, r: &[f64], s: &[f64], u: &[f64], v: &[f64]) -> (f64, f64) {
    let d = sub(s, r);
    let t1 = -(f.eval(s, v) * f.eval(u, r) + f.eval(u, s) * f.eval(v, r)) * f.eval(s, r);
    let t2 = f.eval(&d, u) * f.eval(v, s) * f.eval(u, r) + f.eval(&d, v) * f.eval(s, u) * f.eval(v, r)
        - 2.0 * f.eval(&d, v) * f.eval(v, u) * f.eval(u, r);
    let t3 = -2.0 * f.eval(u, r) * f.eval(&d, v) * f.eval(&add(r, u), &add(&d, v));

    let da = abs_add(s, r);
    let s1 = (f.abs(s, v) * f.abs(u, r) + f.abs(u, s) * f.abs(v, r)) * f.abs(s, r);
    let s2 = f.abs(&da, u) * f.abs(v, s) * f.abs(u, r)
        + f.abs(&da, v) * f.abs(s, u) * f.abs(v, r)
        + 2.0 * f.abs(&da, v) * f.abs(v, u) * f.abs(u, r);
    let s3 = 2.0 * f.abs(u, r) * f.abs(&da, v) * f.abs(&abs_add(r, u), &abs_add(&da, v));
    (t1 + t2 + t3, s1 + s2 + s3)
}

fn relative(res: f64, scale: f64) -> f64 {
    if res == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        res / scale
    }
}

pub fn canonical_identity_check(spec: &ClassicalSpec, samples: &[CanonicalSample]) -> CanonicalReport {
    let xi = spec.xi_matrix();
    let f = Form { xi: &xi };
    let mut rep = CanonicalReport {
        samples: samples.len(),
        can1_max_rel: 0.0,
        phi_max_rel: 0.0,
        phi_midpoint_max_rel: 0.0,
        field_form_vanishes: spec.ups.iter().all(|&x| x == 0.0),
    };
    for p in samples {
        let (res, scale) = can1(&f, p);
        rep.can1_max_rel = rep.can1_max_rel.max(relative(res, scale));
        let (a, sa) = phi_with_scale(&f, &p.r, &p.s, &p.u, &p.v);
        let (b, sb) = phi_with_scale(&f, &sub(&p.s, &p.r), &p.s, &p.u, &p.v);
        rep.phi_max_rel = rep.phi_max_rel.max(relative((a + b).abs(), sa + sb));
        let half: Vec<f64> = p.s.iter().map(|x| 0.5 * x).collect();
        let (c, sc) = phi_with_scale(&f, &half, &p.s, &p.u, &p.v);
        rep.phi_midpoint_max_rel = rep.phi_midpoint_max_rel.max(relative(c.abs(), sc));
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::EnergySpec;
    use crate::linalg::{self, Vector};

    fn spec(n: usize) -> ClassicalSpec {
        let energy = EnergySpec::new(Vector::zeros(n), Mat::identity(n, n), Mat::identity(2, n), vec![]);
        ClassicalSpec::new(&linalg::symplectic_unit(n), &Mat::zeros(2, 2), energy, 1.0).unwrap()
    }

    #[test]
    fn identities_hold_to_rounding() {
        for n in [2, 4] {
            let s = spec(n);
            let rep = canonical_identity_check(&s, &random_canonical_samples(n, 2, 10_000, 17));
            assert!(rep.passes(1e-12), "{rep:?}");
            assert!(rep.field_form_vanishes);
        }
    }

    #[test]
    fn general_antisymmetric_structure() {
        let xi = Mat::from_row_slice(2, 2, &[0.0, 2.5, -2.5, 0.0]);
        let mut s = spec(2);
        s.xi = xi.transpose().as_slice().to_vec();
        let rep = canonical_identity_check(&s, &random_canonical_samples(2, 2, 2000, 3));
        assert!(rep.passes(1e-12), "{rep:?}");
    }

    #[test]
    fn zero_frequency_is_exact() {
        let s = spec(2);
        let mut samples = random_canonical_samples(2, 2, 100, 5);
        for p in &mut samples {
            p.s = vec![0.0, 0.0];
        }
        let rep = canonical_identity_check(&s, &samples);
        assert_eq!(rep.can1_max_rel, 0.0);
    }

    #[test]
    fn phi_is_not_symmetric() {
        // guards against a φ that vanishes identically
        let xi = linalg::symplectic_unit(2);
        let (r, s, u, v) = ([0.3, -0.7], [1.1, 0.4], [-0.5, 0.9], [0.8, 0.2]);
        let a = phi(&xi, &r, &s, &u, &v);
        assert!(a.abs() > 1e-3);
        let b = phi(&xi, &[s[0] - r[0], s[1] - r[1]], &s, &u, &v);
        assert!((a + b).abs() < 1e-14);
    }
}
