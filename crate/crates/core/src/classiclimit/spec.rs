//! Classical data `(Ξ, Υ, h₀, h)` and the drift/dispersion of the limit SDE.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WeylError};
use crate::kernels::{compute_linear_dynamics, EnergySpec, LinearDynamics};
use crate::linalg::{self, Mat, Vector};
use crate::phase::symplectic::SymplecticData;

/// Classical Hamiltonian `h₀` and linear coupling `h = Nx` on a phase space
/// with symplectic matrices `Ξ` (system) and `Υ` (field). The quantum model
/// at Planck constant `ħ` uses `Θ = (ħ/2)Ξ`, `J = (ħ/2)Υ` and energy `h₀/ħ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSpec {
    /// Row-major `n×n`.
    pub xi: Vec<f64>,
    /// Row-major `m×m`.
    pub ups: Vec<f64>,
    pub energy: EnergySpec,
    pub hbar: f64,
}

impl ClassicalSpec {
    pub fn new(xi: &Mat, ups: &Mat, energy: EnergySpec, hbar: f64) -> Result<Self> {
        let s = Self {
            xi: xi.transpose().as_slice().to_vec(),
            ups: ups.transpose().as_slice().to_vec(),
            energy,
            hbar,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.energy.n()
    }

    pub fn m(&self) -> usize {
        self.energy.m()
    }

    pub fn xi_matrix(&self) -> Mat {
        Mat::from_row_slice(self.n(), self.n(), &self.xi)
    }

    pub fn ups_matrix(&self) -> Mat {
        let m = (self.ups.len() as f64).sqrt().round() as usize;
        Mat::from_row_slice(m, m, &self.ups)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.xi.len() != n * n {
            return Err(WeylError::Dimension(format!("Ξ must be {n}x{n}")));
        }
        let m = self.m();
        if self.ups.len() != m * m {
            return Err(WeylError::Dimension(format!("Υ must be {m}x{m} to match N")));
        }
        for (name, mat) in [("Ξ", self.xi_matrix()), ("Υ", self.ups_matrix())] {
            if linalg::antisymmetry_residual(&mat) > 1e-12 * linalg::max_abs(&mat).max(1.0) {
                return Err(WeylError::InvalidInput(format!("{name} must be antisymmetric")));
            }
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(WeylError::InvalidInput("hbar must be positive".into()));
        }
        self.energy.validate(&self.unit_scale())
    }

    /// `Θ = Ξ/2`, `J = Υ/2` without the quantum admissibility check on `I + iJ`.
    fn unit_scale(&self) -> SymplecticData {
        SymplecticData {
            n: self.n(),
            theta: self.xi_matrix() * 0.5,
            m: self.m(),
            j_field: self.ups_matrix() * 0.5,
        }
    }

    /// `Θ = (ħ/2)Ξ`, `J = (ħ/2)Υ`.
    pub fn symplectic_at(&self, hbar: f64) -> Result<SymplecticData> {
        SymplecticData::scaled(&self.xi_matrix(), &self.ups_matrix(), hbar)
    }

    /// Energy data of the quantum model at `ħ`: every coefficient divided by `ħ`.
    pub fn quantum_energy(&self, hbar: f64) -> EnergySpec {
        let inv = 1.0 / hbar;
        let e = &self.energy;
        EnergySpec {
            b: e.b.iter().map(|v| v * inv).collect(),
            r: e.r.iter().map(|v| v * inv).collect(),
            n_coupling: e.n_coupling.iter().map(|v| v * inv).collect(),
            potential_terms: e.potential_terms.iter().map(|t| t.scaled(inv)).collect(),
        }
    }

    /// Quantum model at this spec's `ħ`.
    pub fn quantum(&self) -> Result<(EnergySpec, SymplecticData)> {
        Ok((self.quantum_energy(self.hbar), self.symplectic_at(self.hbar)?))
    }

    /// Linear part `dX = (AX + Ξb)dt + ΞNᵀdW` of the limit SDE, which is
    /// independent of `ħ`.
    pub fn linear_dynamics(&self) -> Result<LinearDynamics> {
        compute_linear_dynamics(&self.energy, &self.unit_scale())
    }

    /// `h₀′(x)`.
    pub fn energy_gradient(&self, x: &[f64]) -> Vector {
        let e = &self.energy;
        let mut g = e.b_vector() + e.r_matrix() * Vector::from_column_slice(x);
        for t in &e.potential_terms {
            let q = t.select(x);
            let dq: Vec<f64> = q.iter().zip(&t.gamma).map(|(a, b)| a - b).collect();
            let lam = t.lambda_matrix();
            let w = t.c * (-0.5 * linalg::quad_form(&lam, &dq)).exp();
            let lq = linalg::mat_vec(&lam, &dq);
            for (r, &k) in t.axes.iter().enumerate() {
                g[k] += w * lq[r];
            }
        }
        g
    }
}

/// `f₀ = Ξ(h₀′ + ½h′ᵀΥh) + ½div(g₀g₀ᵀ)` and `g₀ = Ξh′ᵀ`. With the linear
/// coupling `h = Nx` the dispersion is constant and the divergence vanishes.
pub fn classical_drift_dispersion(spec: &ClassicalSpec, x: &[f64]) -> (Vector, Mat) {
    let xi = spec.xi_matrix();
    let n_mat = spec.energy.n_matrix();
    let h = &n_mat * Vector::from_column_slice(x);
    let field = n_mat.transpose() * (spec.ups_matrix() * h) * 0.5;
    let f = &xi * (spec.energy_gradient(x) + field);
    (f, &xi * n_mat.transpose())
}

/// Precomputed drift `f₀(x) = Ax + Ξb + Ξ Σ Zᵀ cΛ(Zx−γ)e^{−½‖Zx−γ‖²_Λ}`
/// with `A = Ξ(R + ½NᵀΥN)`, and the constant dispersion `g₀ = ΞNᵀ`.
#[derive(Debug, Clone)]
pub struct DriftField {
    pub a: Mat,
    pub constant: Vector,
    pub dispersion: Mat,
    terms: Vec<(crate::kernels::GaussianPotentialTerm, Mat, Mat)>,
    xi: Mat,
}

impl DriftField {
    pub fn new(spec: &ClassicalSpec) -> Result<Self> {
        spec.validate()?;
        let xi = spec.xi_matrix();
        let e = &spec.energy;
        let n_mat = e.n_matrix();
        let a = &xi * (e.r_matrix() + n_mat.transpose() * spec.ups_matrix() * &n_mat * 0.5);
        let terms = e
            .potential_terms
            .iter()
            .map(|t| (t.clone(), t.lambda_matrix(), &xi * t.z_matrix(spec.n()).transpose()))
            .collect();
        Ok(Self {
            a,
            constant: &xi * e.b_vector(),
            dispersion: &xi * n_mat.transpose(),
            terms,
            xi,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.dispersion.ncols()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut v = self.constant[i];
            for j in 0..n {
                v += self.a[(i, j)] * x[j];
            }
            out[i] = v;
        }
        for (t, lam, xz) in &self.terms {
            let dq: Vec<f64> = t.axes.iter().zip(&t.gamma).map(|(&k, g)| x[k] - g).collect();
            let w = t.c * (-0.5 * linalg::quad_form(lam, &dq)).exp();
            let lq = linalg::mat_vec(lam, &dq);
            for i in 0..n {
                out[i] += w * (0..lq.len()).map(|r| xz[(i, r)] * lq[r]).sum::<f64>();
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn xi(&self) -> &Mat {
        &self.xi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GaussianPotentialTerm;

    fn spec(ups_scale: f64, c: f64) -> ClassicalSpec {
        let xi = linalg::symplectic_unit(2);
        let ups = linalg::symplectic_unit(2) * ups_scale;
        let terms = if c == 0.0 {
            vec![]
        } else {
            vec![GaussianPotentialTerm::new(c, vec![0.3, -0.2], Mat::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.5]), vec![0, 1]).unwrap()]
        };
        let energy = EnergySpec::new(
            Vector::from_vec(vec![0.1, -0.2]),
            Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.8]),
            Mat::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.4]),
            terms,
        );
        ClassicalSpec::new(&xi, &ups, energy, 1.0).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let s = spec(1.0, 0.7);
        let x = [0.4, -0.1];
        let g = s.energy_gradient(&x);
        for k in 0..2 {
            let h = 1e-6;
            let mut p = x;
            let mut m = x;
            p[k] += h;
            m[k] -= h;
            let fd = (s.energy.hamiltonian(&p) - s.energy.hamiltonian(&m)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8, "{fd} vs {}", g[k]);
        }
    }

    #[test]
    fn linear_part_agrees_with_the_quantum_coefficients() {
        let s = spec(1.0, 0.0);
        let x = [0.7, -0.4];
        let (f, g) = classical_drift_dispersion(&s, &x);
        for hbar in [1.0, 0.3] {
            let (e, sym) = (s.quantum_energy(hbar), s.symplectic_at(hbar).unwrap());
            let d = compute_linear_dynamics(&e, &sym).unwrap();
            let qf = Vector::from_vec(d.drift(&x));
            assert!((qf - &f).amax() < 1e-12);
            assert!((&d.b_disp - &g).amax() < 1e-12);
        }
    }

    #[test]
    fn vanishing_field_form_gives_the_hamiltonian_vector_field() {
        let s = spec(0.0, 0.7);
        let xi = s.xi_matrix();
        for x in [[0.1, 0.2], [-1.0, 0.5], [2.0, -1.5]] {
            let (f, g) = classical_drift_dispersion(&s, &x);
            assert!((f - &xi * s.energy_gradient(&x)).amax() == 0.0);
            assert!((g - &xi * s.energy.n_matrix().transpose()).amax() == 0.0);
        }
    }

    #[test]
    fn precomputed_field_matches() {
        let s = spec(0.8, 0.7);
        let field = DriftField::new(&s).unwrap();
        for x in [[0.1, 0.2], [-1.0, 0.5], [2.0, -1.5]] {
            let (f, g) = classical_drift_dispersion(&s, &x);
            let v = field.eval(&x);
            assert!((0..2).all(|i| (v[i] - f[i]).abs() < 1e-14));
            assert_eq!(g, field.dispersion);
        }
    }

    #[test]
    fn drift_vanishes_at_a_critical_point() {
        let s = spec(0.0, 0.0);
        // h₀′ = b + Rx = 0
        let crit = -s.energy.r_matrix().try_inverse().unwrap() * s.energy.b_vector();
        let (f, _) = classical_drift_dispersion(&s, crit.as_slice());
        assert!(f.amax() < 1e-14);
    }

    #[test]
    fn rejects_symmetric_structure() {
        let s = spec(1.0, 0.0);
        let bad = Mat::identity(2, 2);
        assert!(ClassicalSpec::new(&bad, &s.ups_matrix(), s.energy.clone(), 1.0).is_err());
        assert!(ClassicalSpec::new(&s.xi_matrix(), &s.ups_matrix(), s.energy.clone(), 0.0).is_err());
    }
}
