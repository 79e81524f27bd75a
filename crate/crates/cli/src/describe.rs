//! Human-readable plan of a configuration; nothing is evolved or written.

use std::fmt::Write;

use anyhow::Result;

use weylflow::dynamics::{stability_bound, Rhs};
use weylflow::kernels::compute_linear_dynamics;
use weylflow::linalg::{self, Mat};
use weylflow::phase::grid::{GridFunction, GridKind};

use crate::config::{ExperimentConfig, Task};

fn matrix(out: &mut String, name: &str, m: &Mat) {
    let _ = writeln!(out, "  {name} =");
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:>10.4}")).collect();
        let _ = writeln!(out, "    [{}]", row.join(" "));
    }
}

pub fn describe(cfg: &ExperimentConfig) -> Result<String> {
    let mut out = String::new();
    let sym = cfg.symplectic()?;
    let energy = cfg.energy()?;
    let dyn_ = compute_linear_dynamics(&energy, &sym)?;
    let s = &cfg.system;
    writeln!(out, "task: {}", cfg.task.name())?;
    writeln!(out, "system: n = {}, m = {}, Θ mode = {:?}, ħ = {}", s.n, s.m, s.theta_mode, s.hbar)?;
    if energy.potential_terms.is_empty() {
        writeln!(out, "potential: none (linear dynamics)")?;
    }
    for (k, t) in energy.potential_terms.iter().enumerate() {
        writeln!(out, "potential[{k}]: d = {}, c = {}, γ = {:?}, axes = {:?}", t.d(), t.c, t.gamma, t.axes)?;
    }
    matrix(&mut out, "A", &dyn_.a);
    matrix(&mut out, "B", &dyn_.b_disp);
    let abscissa = dyn_.spectral_abscissa();
    writeln!(out, "spectral abscissa: {abscissa:.6e} (A Hurwitz: {})", if abscissa < 0.0 { "yes" } else { "no" })?;
    let rank = linalg::controllability_rank(&dyn_.a, &dyn_.b_disp, 1e-10);
    writeln!(out, "controllability rank: {rank} of {}", s.n)?;
    if linalg::max_abs(&dyn_.b_disp) == 0.0 || rank < s.n {
        writeln!(out, "warning: uncontrollable: Σ₀ singular possible")?;
    }
    if let Some(g) = &cfg.grid {
        let grid = g.build(cfg.n(), "grid")?;
        writeln!(
            out,
            "grid: dims {:?}, {} points, spacing {:?}, memory {:.1} MiB per grid function",
            grid.dims,
            grid.len(),
            grid.spacings(),
            grid.memory_bytes() as f64 / (1 << 20) as f64
        )?;
        if let Some(e) = &cfg.evolution {
            let qcf = !matches!(cfg.task, Task::EvolveQpdf | Task::Fit)
                && !(cfg.task == Task::Dissipation && cfg.dissipation.kind == crate::config::DissipationKind::Chi2);
            let opts = cfg.rhs_options()?;
            let (rhs, kind) = if qcf {
                (Rhs::qcf_linear_coupling(&energy, &sym, opts)?, GridKind::Qcf)
            } else {
                (Rhs::qpdf_linear_coupling(&energy, &sym, opts)?, GridKind::Qpdf)
            };
            let bound = stability_bound(&GridFunction::zeros(grid, kind), &rhs, e.cfl);
            writeln!(
                out,
                "scheme: {:?}, dt = {}, t_end = {}, stability bound {bound:.4e} ({})",
                e.scheme,
                e.dt,
                e.t_end,
                if e.dt <= bound { "ok" } else { "violated" }
            )?;
        }
    }
    Ok(out)
}
