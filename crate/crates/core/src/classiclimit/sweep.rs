//! Quantum means at decreasing Planck constant against the classical limit.

use serde::{Deserialize, Serialize};

use crate::classiclimit::sde::{simulate_sde, InitialCondition, MomentTrajectory, SdeConfig};
use crate::classiclimit::spec::ClassicalSpec;
use crate::dynamics::diagnostics::qcf_mean;
use crate::dynamics::evolve::{evolve, EvolutionConfig};
use crate::dynamics::rhs::{Rhs, RhsOptions};
use crate::error::{Result, WeylError};
use crate::phase::gaussian::GaussianState;
use crate::phase::grid::Grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbarSweepConfig {
    pub hbars: Vec<f64>,
    /// Frequency grid of the quantum QCF evolution.
    pub grid: Grid,
    pub evolution: EvolutionConfig,
    pub rhs: RhsOptions,
    /// `t_end` is taken from `evolution`.
    pub sde: SdeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbarSweepReport {
    pub t_end: f64,
    pub hbar: Vec<f64>,
    pub quantum_mean: Vec<Vec<f64>>,
    pub classical_mean: Vec<f64>,
    pub classical_se: Vec<f64>,
    /// `max_i |quantum mean_i − classical mean_i|` per `ħ`.
    pub difference: Vec<f64>,
    /// Differences in units of the largest classical standard error.
    pub difference_in_se: Vec<f64>,
    /// Differences decrease along the given `ħ` order.
    pub monotone: bool,
}

/// Mean of `X(t_end)` from the quantum QCF dynamics with `Θ = (ħ/2)Ξ`,
/// `J = (ħ/2)Υ` and energy `h₀/ħ`, started from the Gaussian QCF of `init`.
pub fn quantum_mean(spec: &ClassicalSpec, hbar: f64, init: &GaussianState, cfg: &HbarSweepConfig) -> Result<Vec<f64>> {
    let mut s = spec.clone();
    s.hbar = hbar;
    let (energy, sym) = s.quantum()?;
    let margin = init.uncertainty_margin(&sym.theta);
    if margin < -cfg.evolution.tolerances.psd {
        return Err(WeylError::InvalidInput(format!(
            "initial covariance violates the uncertainty relation at ħ = {hbar} (margin {margin:.3e})"
        )));
    }
    let rhs = Rhs::qcf_linear_coupling(&energy, &sym, cfg.rhs)?;
    let traj = evolve(&init.sample_qcf(&cfg.grid), &rhs, &cfg.evolution)?.into_checked()?;
    qcf_mean(traj.last(), cfg.rhs.accuracy)
}

pub fn classical_moments(spec: &ClassicalSpec, init: &GaussianState, cfg: &HbarSweepConfig) -> Result<MomentTrajectory> {
    let sde = SdeConfig { t_end: cfg.evolution.t_end, ..cfg.sde };
    simulate_sde(spec, &InitialCondition::gaussian(init), &sde)
}

pub fn hbar_sweep(spec: &ClassicalSpec, init: &GaussianState, cfg: &HbarSweepConfig) -> Result<HbarSweepReport> {
    if cfg.hbars.is_empty() || cfg.hbars.iter().any(|&h| !(h > 0.0)) {
        return Err(WeylError::InvalidInput("hbar values must be positive and nonempty".into()));
    }
    if spec.n() != 2 || cfg.grid.ndim() != 2 {
        return Err(WeylError::Unsupported("the ħ sweep runs the quantum side on n = 2 grids".into()));
    }
    let mc = classical_moments(spec, init, cfg)?;
    let classical_mean = mc.final_mean().to_vec();
    let classical_se = mc.mean_se.last().cloned().unwrap_or_default();
    let se = classical_se.iter().copied().fold(0.0, f64::max);
    let mut rep = HbarSweepReport {
        t_end: cfg.evolution.t_end,
        hbar: cfg.hbars.clone(),
        quantum_mean: Vec::new(),
        classical_mean,
        classical_se,
        difference: Vec::new(),
        difference_in_se: Vec::new(),
        monotone: true,
    };
    for &h in &cfg.hbars {
        let q = quantum_mean(spec, h, init, cfg)?;
        let d = q.iter().zip(&rep.classical_mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        log::info!("ħ = {h}: |quantum − classical| = {d:.3e}");
        rep.quantum_mean.push(q);
        rep.difference.push(d);
        rep.difference_in_se.push(if se > 0.0 { d / se } else { f64::INFINITY });
    }
    rep.monotone = rep.difference.windows(2).all(|w| w[1] <= w[0]);
    Ok(rep)
}
