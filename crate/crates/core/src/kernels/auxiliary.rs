//! Auxiliary kernels `K`, `M`, `L` entering the Weyl symbols of the drift
//! and the QCF evolution kernel.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::linalg::Mat;
use crate::phase::symplectic::SymplecticData;
use crate::quadrature::gauss_legendre;

pub type CMat = DMatrix<Complex64>;

/// Below this magnitude of `uᵀΘv` or `uᵀΘw` the closed form of `M` loses
/// digits and the stable integral representation is used instead.
pub const SINC_SWITCH: f64 = 1e-4;

pub fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 * (1.0 - z2 / 20.0)
    } else {
        z.sin() / z
    }
}

/// `K(u, v) = sin(uᵀΘv) I + cos(uᵀΘv) J`.
pub fn kernel_k(u: &[f64], v: &[f64], sym: &SymplecticData) -> Mat {
    k_from_phase(sym.form(u, v), &sym.j_field)
}

pub fn k_from_phase(phase: f64, j: &Mat) -> Mat {
    let m = j.nrows();
    Mat::identity(m, m) * phase.sin() + j * phase.cos()
}

/// `∫∫_{−½ ≤ r ≤ z ≤ ½} e^{2i(βr + γz)} dr dz`.
pub fn m_of(beta: f64, gamma: f64) -> Complex64 {
    if beta.abs() < SINC_SWITCH || gamma.abs() < SINC_SWITCH {
        return m_by_quadrature(beta, gamma);
    }
    let re = 0.5 * sinc(beta) * sinc(gamma);
    let im = (beta - gamma) * (sinc(beta + gamma) - sinc(beta - gamma)) / (4.0 * beta * gamma);
    Complex64::new(re, im)
}

/// Inner integral in closed form, `∫_{−½}^{z} e^{2iβr} dr = (z+½) e^{iβ(z−½)} sinc(β(z+½))`,
/// outer integral by Gauss–Legendre; smooth in `(β, γ)` including the axes.
fn m_by_quadrature(beta: f64, gamma: f64) -> Complex64 {
    let nodes = (24.0 + 2.0 * (beta.abs() + gamma.abs())).min(400.0) as usize;
    let (x, w) = gauss_legendre(nodes);
    x.iter()
        .zip(&w)
        .map(|(&t, &wk)| {
            let z = 0.5 * t;
            let len = z + 0.5;
            let inner = Complex64::from_polar(len * sinc(beta * len), beta * (z - 0.5));
            inner * Complex64::from_polar(0.5 * wk, 2.0 * gamma * z)
        })
        .sum()
}

/// `M(u, v, w)` with `β = −uᵀΘv`, `γ = −uᵀΘw`.
pub fn kernel_m(u: &[f64], v: &[f64], w: &[f64], sym: &SymplecticData) -> Complex64 {
    m_of(-sym.form(u, v), -sym.form(u, w))
}

/// `L(u, v, s) = Re(M(u, v, s − v) e^{isᵀΘv} Ω)`.
pub fn kernel_l(u: &[f64], v: &[f64], s: &[f64], sym: &SymplecticData) -> Mat {
    let w: Vec<f64> = s.iter().zip(v).map(|(a, b)| a - b).collect();
    let mval = kernel_m(u, v, &w, sym);
    let phase = sym.form(s, v);
    let (sn, cs) = phase.sin_cos();
    // Re(e^{iφ}Ω) = cos φ I − sin φ J and Im(e^{iφ}Ω) = K(s, v)
    let m = sym.m;
    let re_part = Mat::identity(m, m) * cs - &sym.j_field * sn;
    re_part * mval.re - k_from_phase(phase, &sym.j_field) * mval.im
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym() -> SymplecticData {
        SymplecticData::standard(2, 2).unwrap()
    }

    fn triangle(beta: f64, gamma: f64) -> Complex64 {
        // composite Gauss–Legendre over z, inner r-integral on [−½, z]
        let (x, w) = gauss_legendre(40);
        let mut total = Complex64::new(0.0, 0.0);
        let panels = 8;
        for p in 0..panels {
            let a = -0.5 + p as f64 / panels as f64;
            let b = a + 1.0 / panels as f64;
            for (xi, wi) in x.iter().zip(&w) {
                let z = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                let mut inner = Complex64::new(0.0, 0.0);
                let len = z + 0.5;
                for (xj, wj) in x.iter().zip(&w) {
                    let r = -0.5 + 0.5 * len * (1.0 + xj);
                    inner += Complex64::from_polar(0.5 * len * wj, 2.0 * beta * r);
                }
                total += inner * Complex64::from_polar(0.5 * (b - a) * wi, 2.0 * gamma * z);
            }
        }
        total
    }

    #[test]
    fn k_examples() {
        let s = sym();
        assert_eq!(kernel_k(&[1.0, 2.0], &[0.0, 0.0], &s), s.j_field);
        // uᵀΘv = ½(u₁v₂ − u₂v₁) = π/2
        let k = kernel_k(&[std::f64::consts::PI, 0.0], &[0.0, 1.0], &s);
        assert!((k - Mat::identity(2, 2)).abs().max() < 1e-15);
    }

    #[test]
    fn m_at_origin_is_half() {
        let s = sym();
        let v = kernel_m(&[0.0, 0.0], &[1.0, 2.0], &[3.0, -1.0], &s);
        assert!((v - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn m_matches_triangle_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let b: f64 = rng.random_range(-6.0..6.0);
            let g: f64 = rng.random_range(-6.0..6.0);
            assert!((m_of(b, g) - triangle(b, g)).norm() < 1e-10, "{b} {g}");
        }
        for (b, g) in [(0.0, 2.0), (3e-5, -1.5), (2.0, 1e-7), (1e-6, 1e-6), (0.0, 0.0)] {
            assert!((m_of(b, g) - triangle(b, g)).norm() < 1e-10, "{b} {g}");
        }
    }

    #[test]
    fn m_is_continuous_across_switch() {
        for g in [-3.0, 0.4, 5.0] {
            let a = m_of(SINC_SWITCH * (1.0 - 1e-9), g);
            let b = m_of(SINC_SWITCH * (1.0 + 1e-9), g);
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn l_examples() {
        let s = sym();
        let z = [0.0, 0.0];
        let l = kernel_l(&z, &z, &[0.4, 0.1], &s);
        assert!((l - Mat::identity(2, 2) * 0.5).abs().max() < 1e-15);

        let (u, v, sv) = ([0.7, -1.1], [0.3, 0.9], [-0.5, 0.2]);
        let w: Vec<f64> = sv.iter().zip(&v).map(|(a, b)| a - b).collect();
        let mval = kernel_m(&u, &v, &w, &s);
        let om = s.omega();
        let direct = om.map(|o| (mval * Complex64::from_polar(1.0, s.form(&sv, &v)) * o).re);
        assert!((kernel_l(&u, &v, &sv, &s) - direct).abs().max() < 1e-14);

        let l = kernel_l(&u, &v, &v, &s);
        let direct = om.map(|o| (kernel_m(&u, &v, &[0.0, 0.0], &s) * o).re);
        assert!((l - direct).abs().max() < 1e-14);
    }
}
