//! Time integration of the grid equations and trajectory output.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dynamics::flow::LinearPropagator;
use crate::dynamics::rhs::{Rhs, RhsKind};
use crate::error::{Result, WeylError};
use crate::linalg;
use crate::phase::grid::{GridFunction, GridKind};
use crate::phase::io;
use crate::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Classical RK4 on the method-of-lines system.
    #[default]
    Rk4Lines,
    /// Exact linear flow around an RK4 step of the integral term (QCF only).
    StrangSplit,
}

/// Invariant violations beyond this multiple of the tolerance abort a run.
pub const ABORT_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Snapshot every this many steps (the final state is always kept).
    pub snapshot_every: usize,
    pub cfl: f64,
    pub tolerances: Tolerances,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            t_end: 1.0,
            scheme: Scheme::Rk4Lines,
            snapshot_every: 10,
            cfl: 0.5,
            tolerances: Tolerances::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end >= 0.0) {
            return Err(WeylError::InvalidInput("need dt > 0 and t_end >= 0".into()));
        }
        if self.snapshot_every == 0 {
            return Err(WeylError::InvalidInput("snapshot cadence must be positive".into()));
        }
        if !(self.cfl > 0.0) {
            return Err(WeylError::InvalidInput("cfl must be positive".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        if self.t_end == 0.0 {
            0
        } else {
            (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize
        }
    }
}

/// Largest step allowed on `f`'s grid by the advection bound
/// `dt ≤ cfl·Δ/max|Aᵀu|` (or `|Ax + c|` for QPDFs), together with the RK4
/// bounds for the damping and diffusion terms.
pub fn stability_bound(f: &GridFunction, rhs: &Rhs, cfl: f64) -> f64 {
    let grid = &f.grid;
    let n = grid.ndim();
    let dyn_ = &rhs.dyn_;
    let h = grid.spacings().into_iter().fold(f64::INFINITY, f64::min);
    let hw = grid.half_widths();
    // the extreme speeds of a linear field are attained at the box corners
    let mut speed: f64 = 0.0;
    let mut damping: f64 = 0.0;
    let q = dyn_.diffusion();
    for corner in 0..(1usize << n) {
        let x: Vec<f64> = (0..n)
            .map(|k| if corner >> k & 1 == 1 { hw[k] } else { -hw[k] })
            .collect();
        let v: Vec<f64> = match rhs.kind {
            RhsKind::QpdfLinearCoupling => dyn_.drift(&x),
            _ => linalg::mat_vec(&dyn_.a.transpose(), &x),
        };
        speed = speed.max(v.iter().map(|c| c * c).sum::<f64>().sqrt());
        damping = damping.max(0.5 * linalg::quad_form(&q, &x));
    }
    let mut bound = if speed > 0.0 { cfl * h / speed } else { f64::INFINITY };
    match rhs.kind {
        RhsKind::QpdfLinearCoupling => {
            let dmax = (0..n).map(|k| q[(k, k)]).fold(0.0, f64::max);
            if dmax > 0.0 {
                bound = bound.min(cfl * h * h / dmax);
            }
        }
        _ => {
            if damping > 0.0 {
                bound = bound.min(2.0 * cfl / damping);
            }
        }
    }
    bound
}

/// Per-snapshot invariant diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSample {
    pub t: f64,
    /// `|Φ(t,0) − 1|` for QCFs, `|∫℧ − 1|` for QPDFs.
    pub normalization: f64,
    /// Hermitian residual for QCFs, largest imaginary part for QPDFs.
    pub symmetry: f64,
    pub max_abs: f64,
}

impl InvariantSample {
    pub fn measure(f: &GridFunction) -> Self {
        let (normalization, symmetry) = match f.kind {
            GridKind::Qpdf => ((f.integral() - 1.0).norm(), f.max_imag()),
            _ => (
                f.origin_value().map(|v| (v - 1.0).norm()).unwrap_or(f64::NAN),
                f.hermitian_residual(),
            ),
        };
        Self {
            t: f.time,
            normalization,
            symmetry,
            max_abs: f.max_abs(),
        }
    }

    /// Message describing the first invariant exceeding `factor` times its
    /// tolerance.
    pub fn violation(&self, tol: &Tolerances, factor: f64, kind: GridKind) -> Option<String> {
        let norm_tol = match kind {
            GridKind::Qpdf => factor * tol.norm * self.t.max(1.0),
            _ => factor * tol.norm,
        };
        if !(self.normalization <= norm_tol) {
            return Some(format!(
                "normalization drift {:.3e} exceeds {:.1e} at t = {}",
                self.normalization, norm_tol, self.t
            ));
        }
        if !(self.symmetry <= factor * tol.sym) {
            return Some(format!(
                "symmetry residual {:.3e} exceeds {:.1e} at t = {}",
                self.symmetry,
                factor * tol.sym,
                self.t
            ));
        }
        if kind == GridKind::Qcf && !(self.max_abs <= 1.0 + factor * tol.norm) {
            return Some(format!("max |Φ| = {} exceeds 1 at t = {}", self.max_abs, self.t));
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub dt: f64,
    pub snapshots: Vec<GridFunction>,
    pub invariants: Vec<InvariantSample>,
    /// Set when the run was stopped by an invariant violation; the last
    /// snapshot is the offending state.
    pub aborted: Option<String>,
    pub excursions: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &GridFunction {
        self.snapshots.last().expect("trajectory holds the initial state")
    }

    pub fn into_checked(self) -> Result<Self> {
        match &self.aborted {
            Some(msg) => Err(WeylError::Invariant(msg.clone())),
            None => Ok(self),
        }
    }

    /// One binary grid per snapshot plus `manifest.json`.
    pub fn write(&self, dir: &Path, config_hash: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (k, s) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{k:05}.bin");
            io::write_grid(s, &dir.join(&name), json!({"index": k, "scheme": self.scheme}))?;
            files.push(name);
        }
        let manifest = json!({
            "times": self.times(),
            "scheme": self.scheme,
            "dt": self.dt,
            "config_hash": config_hash,
            "files": files,
            "invariants": self.invariants,
            "aborted": self.aborted,
            "interpolation_excursions": self.excursions,
        });
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}

fn add_scaled(a: &[Complex64], b: &[Complex64], c: f64) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x + y * c).collect()
}

/// One classical RK4 step of `ẏ = op(y)`.
fn rk4_step<F>(f: &GridFunction, h: f64, op: F) -> Result<Vec<Complex64>>
where
    F: Fn(&GridFunction) -> Result<Vec<Complex64>>,
{
    let y = &f.values;
    let k1 = op(f)?;
    let k2 = op(&f.with_values(add_scaled(y, &k1, 0.5 * h)))?;
    let k3 = op(&f.with_values(add_scaled(y, &k2, 0.5 * h)))?;
    let k4 = op(&f.with_values(add_scaled(y, &k3, h)))?;
    Ok((0..y.len())
        .map(|i| y[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0))
        .collect())
}

/// Integrates `state` with `rhs` up to `cfg.t_end`.
///
/// The Strang scheme keeps the trailing linear half step pending and merges
/// it with the next leading half step, so a run without integral term is a
/// single exact flow between snapshots.
pub fn evolve(state: &GridFunction, rhs: &Rhs, cfg: &EvolutionConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if state.kind != rhs.kind.grid_kind() {
        return Err(WeylError::InvalidInput(format!(
            "{:?} right-hand side cannot evolve a {:?} grid",
            rhs.kind, state.kind
        )));
    }
    if cfg.scheme == Scheme::StrangSplit && state.kind != GridKind::Qcf {
        return Err(WeylError::InvalidInput("strang_split applies to QCF evolution only".into()));
    }
    let steps = cfg.steps();
    let dt = if steps == 0 { cfg.dt } else { cfg.t_end / steps as f64 };
    let bound = stability_bound(state, rhs, cfg.cfl);
    let needs_bound = cfg.scheme == Scheme::Rk4Lines || rhs.has_integral();
    if steps > 0 && needs_bound && dt > bound {
        return Err(WeylError::InvalidInput(format!(
            "time step {dt:.3e} violates the stability bound {bound:.3e} (cfl = {})",
            cfg.cfl
        )));
    }

    let tol = cfg.tolerances;
    let kind = state.kind;
    let start = state.clone();
    let mut traj = Trajectory {
        scheme: cfg.scheme,
        dt,
        invariants: vec![InvariantSample::measure(&start)],
        snapshots: vec![start.clone()],
        aborted: None,
        excursions: 0,
    };
    let t0 = state.time;
    let mut cur = start;
    let mut pending = 0.0;
    let half = LinearPropagator::new(&rhs.dyn_, 0.5 * dt);
    let full = LinearPropagator::new(&rhs.dyn_, dt);
    let mut flow_excursions = 0usize;

    let flush = |f: GridFunction, pending: &mut f64, flow_excursions: &mut usize| -> GridFunction {
        if *pending == 0.0 {
            return f;
        }
        let prop = if (*pending - 0.5 * dt).abs() < 1e-14 * dt {
            half.clone()
        } else if (*pending - dt).abs() < 1e-14 * dt {
            full.clone()
        } else {
            LinearPropagator::new(&rhs.dyn_, *pending)
        };
        let (out, exc) = prop.apply(&f, &rhs.opts.interp);
        *flow_excursions += exc;
        *pending = 0.0;
        out
    };

    for step in 1..=steps {
        let t_next = t0 + step as f64 * dt;
        cur = match cfg.scheme {
            Scheme::Rk4Lines => {
                let vals = rk4_step(&cur, dt, |g| rhs.eval(g))?;
                cur.with_values(vals)
            }
            Scheme::StrangSplit => {
                pending += 0.5 * dt;
                if rhs.has_integral() {
                    cur = flush(cur, &mut pending, &mut flow_excursions);
                    let vals = rk4_step(&cur, dt, |g| rhs.eval_integral(g))?;
                    cur = cur.with_values(vals);
                }
                pending += 0.5 * dt;
                cur
            }
        };
        let snap = step % cfg.snapshot_every == 0 || step == steps;
        if snap {
            cur = flush(cur, &mut pending, &mut flow_excursions);
        }
        cur.time = t_next;
        if snap {
            let sample = InvariantSample::measure(&cur);
            let violation = sample.violation(&tol, ABORT_FACTOR, kind);
            traj.invariants.push(sample);
            traj.snapshots.push(cur.clone());
            if let Some(msg) = violation {
                log::error!("aborting evolution: {msg}");
                traj.aborted = Some(msg);
                break;
            }
        }
    }
    traj.excursions = rhs.excursions() + flow_excursions;
    if traj.excursions > 0 && rhs.opts.interp.boundary == crate::phase::grid::Boundary::Clamp {
        log::warn!(
            "{} interpolation requests fell outside the grid and were clamped",
            traj.excursions
        );
    }
    Ok(traj)
}
