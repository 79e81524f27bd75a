//! Right-hand sides of the QCF and QPDF evolution equations on a grid.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WeylError};
use crate::kernels::symbols::kernel_pi_over_envelope;
use crate::kernels::{compute_linear_dynamics, EnergySpec, KernelTable, LinearDynamics, PreparedTerm};
use crate::linalg;
use crate::phase::grid::{Boundary, Grid, GridFunction, GridKind, Interpolation, ShiftStencil};
use crate::phase::symplectic::SymplecticData;
use crate::quadrature::QuadratureRule;

/// Discretization parameters shared by every right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhsOptions {
    /// Formal accuracy of the central-difference stencils.
    pub accuracy: usize,
    pub interp: Interpolation,
    /// Gauss–Hermite nodes per axis of each potential term.
    pub quad_nodes: usize,
}

impl Default for RhsOptions {
    fn default() -> Self {
        Self {
            accuracy: 4,
            interp: Interpolation::default(),
            quad_nodes: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsKind {
    /// Linear-coupling QCF equation with Gauss–Hermite integral term.
    QcfLinearCoupling,
    /// General QCF equation with tabulated kernel `V` (n = 2).
    QcfGeneral,
    /// Linear-coupling QPDF equation.
    QpdfLinearCoupling,
}

impl RhsKind {
    pub fn grid_kind(self) -> GridKind {
        match self {
            RhsKind::QpdfLinearCoupling => GridKind::Qpdf,
            _ => GridKind::Qcf,
        }
    }
}

/// Evolution operator split as linear part `𝔄` plus integral part `𝔅`.
#[derive(Debug)]
pub struct Rhs {
    pub kind: RhsKind,
    pub dyn_: LinearDynamics,
    pub sym: SymplecticData,
    pub terms: Vec<PreparedTerm>,
    rules: Vec<QuadratureRule>,
    table: Option<KernelTable>,
    pub opts: RhsOptions,
    excursions: AtomicUsize,
}

impl Rhs {
    fn base(kind: RhsKind, spec: &EnergySpec, sym: &SymplecticData, opts: RhsOptions) -> Result<Self> {
        spec.validate(sym)?;
        if !matches!(opts.accuracy, 2 | 4 | 6 | 8) {
            return Err(WeylError::InvalidInput(format!(
                "stencil accuracy must be 2, 4, 6 or 8, got {}",
                opts.accuracy
            )));
        }
        if opts.quad_nodes == 0 {
            return Err(WeylError::InvalidInput("quadrature needs at least one node".into()));
        }
        let terms: Vec<PreparedTerm> = spec.potential_terms.iter().map(|t| t.prepare()).collect();
        let rules = terms
            .iter()
            .map(|t| QuadratureRule::whitened_hermite(&t.term.lambda_matrix(), opts.quad_nodes))
            .collect();
        Ok(Self {
            kind,
            dyn_: compute_linear_dynamics(spec, sym)?,
            sym: sym.clone(),
            terms,
            rules,
            table: None,
            opts,
            excursions: AtomicUsize::new(0),
        })
    }

    pub fn qcf_linear_coupling(spec: &EnergySpec, sym: &SymplecticData, opts: RhsOptions) -> Result<Self> {
        Self::base(RhsKind::QcfLinearCoupling, spec, sym, opts)
    }

    pub fn qpdf_linear_coupling(spec: &EnergySpec, sym: &SymplecticData, opts: RhsOptions) -> Result<Self> {
        Self::base(RhsKind::QpdfLinearCoupling, spec, sym, opts)
    }

    /// Tabulates `V` on the lattice of node offsets of `grid`.
    pub fn qcf_general(spec: &EnergySpec, sym: &SymplecticData, grid: &Grid, opts: RhsOptions) -> Result<Self> {
        if sym.n != 2 {
            return Err(WeylError::Unsupported(format!(
                "the general kernel path is restricted to n = 2 (got n = {})",
                sym.n
            )));
        }
        let mut rhs = Self::base(RhsKind::QcfGeneral, spec, sym, opts)?;
        rhs.table = Some(KernelTable::build(grid, spec, sym)?);
        Ok(rhs)
    }

    pub fn table(&self) -> Option<&KernelTable> {
        self.table.as_ref()
    }

    pub fn has_integral(&self) -> bool {
        !self.terms.is_empty()
    }

    /// Off-grid interpolation requests since construction.
    pub fn excursions(&self) -> usize {
        self.excursions.load(Ordering::Relaxed)
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if f.kind != self.kind.grid_kind() {
            return Err(WeylError::InvalidInput(format!(
                "{:?} right-hand side applied to a {:?} grid",
                self.kind, f.kind
            )));
        }
        if f.grid.ndim() != self.sym.n {
            return Err(WeylError::Dimension("grid rank differs from n".into()));
        }
        if let Some(t) = &self.table {
            if !t.grid.matches(&f.grid) {
                return Err(WeylError::InvalidInput("kernel table was built for another grid".into()));
            }
        }
        Ok(())
    }

    pub fn eval(&self, f: &GridFunction) -> Result<Vec<Complex64>> {
        let mut lin = self.eval_linear(f)?;
        if self.has_integral() {
            let int = self.eval_integral(f)?;
            lin.iter_mut().zip(int).for_each(|(a, b)| *a += b);
        }
        Ok(lin)
    }

    /// Linear part: `uᵀA∂Φ + (iuᵀ2Θb − ½|Bᵀu|²)Φ` for QCFs, the
    /// Fokker–Planck operator for QPDFs.
    pub fn eval_linear(&self, f: &GridFunction) -> Result<Vec<Complex64>> {
        self.check(f)?;
        Ok(match self.kind {
            RhsKind::QpdfLinearCoupling => fokker_planck(f, &self.dyn_, self.opts.accuracy),
            _ => qcf_linear_part(f, &self.dyn_, self.opts.accuracy),
        })
    }

    /// Integral (Moyal) part.
    pub fn eval_integral(&self, f: &GridFunction) -> Result<Vec<Complex64>> {
        self.check(f)?;
        if !self.has_integral() {
            return Ok(vec![Complex64::new(0.0, 0.0); f.values.len()]);
        }
        Ok(match self.kind {
            RhsKind::QcfGeneral => self.table.as_ref().expect("table built").apply(f),
            RhsKind::QcfLinearCoupling => self.qcf_integral(f),
            RhsKind::QpdfLinearCoupling => self.qpdf_integral(f),
        })
    }

    /// Value of `f` at node `flat` displaced by `shift`.
    #[inline]
    fn displaced(&self, f: &GridFunction, flat: usize, idx: &[usize], x: &[f64], node: &ShiftNode) -> Complex64 {
        let (val, out) = match &node.stencil {
            Some(st) => f.shifted_value(idx, flat, st),
            None => {
                let target: Vec<f64> = x.iter().zip(&node.shift).map(|(a, b)| a + b).collect();
                f.interpolate(&target, &self.opts.interp)
            }
        };
        if out {
            self.excursions.fetch_add(1, Ordering::Relaxed);
        }
        val
    }

    fn shift_node(&self, grid: &Grid, shift: Vec<f64>) -> ShiftNode {
        let stencil = (self.opts.interp.boundary == Boundary::ZeroPad)
            .then(|| ShiftStencil::new(grid, &shift, self.opts.interp.points));
        ShiftNode { shift, stencil }
    }

    /// `−2 Σ_terms ∫ sin(uᵀΘZᵀv) H̃₀(v) Φ(u + Zᵀv) dv` by whitened Gauss–Hermite.
    fn qcf_integral(&self, phi: &GridFunction) -> Vec<Complex64> {
        let grid = &phi.grid;
        let n = self.sym.n;
        let nodes: Vec<(ShiftNode, Complex64)> = self
            .terms
            .iter()
            .zip(&self.rules)
            .flat_map(|(t, r)| {
                r.nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(v, w)| (self.shift_node(grid, t.term.lift(v, n)), t.h0_over_envelope(v) * (-2.0 * w)))
                    .collect::<Vec<_>>()
            })
            .collect();
        (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let idx = grid.unravel(flat);
                let u = grid.point(flat);
                let mut acc = Complex64::new(0.0, 0.0);
                for (node, c) in &nodes {
                    let sn = self.sym.form(&u, &node.shift).sin();
                    if sn == 0.0 {
                        continue;
                    }
                    acc += c * self.displaced(phi, flat, &idx, &u, node) * sn;
                }
                acc
            })
            .collect()
    }

    /// `−2 Σ_terms ∫ Π(x, v) ℧(x − ΘZᵀv) dv` by whitened Gauss–Hermite.
    fn qpdf_integral(&self, mho: &GridFunction) -> Vec<Complex64> {
        let grid = &mho.grid;
        let n = self.sym.n;
        let nodes: Vec<(&PreparedTerm, &Vec<f64>, f64, ShiftNode)> = self
            .terms
            .iter()
            .zip(&self.rules)
            .flat_map(|(t, r)| {
                r.nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(v, w)| {
                        let s: Vec<f64> = linalg::mat_vec(&self.sym.theta, &t.term.lift(v, n))
                            .into_iter()
                            .map(|c| -c)
                            .collect();
                        (t, v, *w, self.shift_node(grid, s))
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let idx = grid.unravel(flat);
                let x = grid.point(flat);
                let mut acc = 0.0;
                for (t, v, w, node) in &nodes {
                    let pi = kernel_pi_over_envelope(&x, v, t);
                    acc += w * pi * self.displaced(mho, flat, &idx, &x, node).re;
                }
                Complex64::new(-2.0 * acc, 0.0)
            })
            .collect()
    }
}

#[derive(Debug)]
struct ShiftNode {
    shift: Vec<f64>,
    stencil: Option<ShiftStencil>,
}

/// `uᵀA∂_uΦ + (i uᵀc − ½ uᵀBBᵀu) Φ` with `c = 2Θb`.
pub fn qcf_linear_part(phi: &GridFunction, dyn_: &LinearDynamics, accuracy: usize) -> Vec<Complex64> {
    let grid = &phi.grid;
    let n = grid.ndim();
    let grad = phi.gradient(accuracy);
    let q = dyn_.diffusion();
    (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let u = grid.point(flat);
            // (Aᵀu)_k multiplies ∂_kΦ
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                let w: f64 = (0..n).map(|j| u[j] * dyn_.a[(j, k)]).sum();
                acc += grad[k][flat] * w;
            }
            let c = Complex64::new(
                -0.5 * linalg::quad_form(&q, &u),
                linalg::dot(dyn_.drift_const.as_slice(), &u),
            );
            acc + c * phi.values[flat]
        })
        .collect()
}

/// `−div(℧(Ax + c)) + ½ div²(℧BBᵀ)` by central differences of conservative
/// form.
pub fn fokker_planck(mho: &GridFunction, dyn_: &LinearDynamics, accuracy: usize) -> Vec<Complex64> {
    let grid = &mho.grid;
    let n = grid.ndim();
    let q = dyn_.diffusion();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    for k in 0..n {
        let flux: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let x = grid.point(flat);
                let drift: f64 = (0..n).map(|j| dyn_.a[(k, j)] * x[j]).sum::<f64>() + dyn_.drift_const[k];
                mho.values[flat] * drift
            })
            .collect();
        let d = mho.with_values(flux).derivative(k, 1, accuracy);
        out.iter_mut().zip(d).for_each(|(o, v)| *o -= v);
    }
    for j in 0..n {
        if q[(j, j)] != 0.0 {
            let d2 = mho.derivative(j, 2, accuracy);
            out.iter_mut().zip(d2).for_each(|(o, v)| *o += v * (0.5 * q[(j, j)]));
        }
        for k in (j + 1)..n {
            if q[(j, k)] != 0.0 {
                let dj = mho.with_values(mho.derivative(j, 1, accuracy));
                let djk = dj.derivative(k, 1, accuracy);
                out.iter_mut().zip(djk).for_each(|(o, v)| *o += v * q[(j, k)]);
            }
        }
    }
    out
}

/// Linear-coupling QCF right-hand side as a grid function.
pub fn qcf_rhs_linear_coupling(
    phi: &GridFunction,
    spec: &EnergySpec,
    sym: &SymplecticData,
    opts: RhsOptions,
) -> Result<GridFunction> {
    let rhs = Rhs::qcf_linear_coupling(spec, sym, opts)?;
    Ok(phi.with_values(rhs.eval(phi)?).with_kind(GridKind::Generic))
}

/// Linear-coupling QPDF right-hand side as a grid function.
pub fn qpdf_rhs_linear_coupling(
    mho: &GridFunction,
    spec: &EnergySpec,
    sym: &SymplecticData,
    opts: RhsOptions,
) -> Result<GridFunction> {
    let rhs = Rhs::qpdf_linear_coupling(spec, sym, opts)?;
    Ok(mho.with_values(rhs.eval(mho)?).with_kind(GridKind::Generic))
}

/// General QCF right-hand side: tabulated `V` for the potential plus the
/// analytically applied linear part.
pub fn qcf_rhs_general(
    phi: &GridFunction,
    spec: &EnergySpec,
    sym: &SymplecticData,
    opts: RhsOptions,
) -> Result<GridFunction> {
    let rhs = Rhs::qcf_general(spec, sym, &phi.grid, opts)?;
    Ok(phi.with_values(rhs.eval(phi)?).with_kind(GridKind::Generic))
}
