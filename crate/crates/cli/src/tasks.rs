//! Task pipelines. Each writes its artifacts under the output directory and
//! returns a JSON summary plus any invariant violations found on the way.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Result};
use num_complex::Complex64;
use serde_json::{json, Value};

use weylflow::classiclimit::{
    canonical_identity_check, hbar_sweep, random_canonical_samples, simulate_sde, HbarSweepConfig, InitialCondition,
    SdeConfig,
};
use weylflow::dynamics::{
    dissipation_balance, evolve, propagate_gaussian, qcf_mean, stability_bound, steady_state, Rhs, Trajectory,
};
use weylflow::gaussfit::{dissipation_chi2, fit_gaussian, grid_moments, FitOptions, RefPath};
use weylflow::invariant::{invariant_series, invariant_summary, SeriesConfig};
use weylflow::kernels::{compute_linear_dynamics, EnergySpec, MoyalImage};
use weylflow::linalg::Mat;
use weylflow::phase::fourier::dual_grid;
use weylflow::phase::gaussian::GaussianState;
use weylflow::phase::grid::{Grid, GridFunction, GridKind};
use weylflow::phase::io::write_grid;
use weylflow::phase::symplectic::SymplecticData;

use crate::config::{DissipationKind, ExperimentConfig, FitSource, Sides, Task};

#[derive(Debug, Default)]
pub struct TaskOutput {
    pub summary: Value,
    pub violations: Vec<String>,
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn csv(path: &Path, header: &[String], body: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for r in body {
        let line: Vec<String> = r.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn run_task(cfg: &ExperimentConfig, out: &Path, config_hash: &str) -> Result<TaskOutput> {
    std::fs::create_dir_all(out)?;
    let mut res = match cfg.task {
        Task::EvolveQcf => evolve_task(cfg, out, config_hash, true)?,
        Task::EvolveQpdf => evolve_task(cfg, out, config_hash, false)?,
        Task::Gaussian => gaussian_task(cfg, out)?,
        Task::Invariant => invariant_task(cfg, out)?,
        Task::Fit => fit_task(cfg, out, config_hash)?,
        Task::Dissipation => dissipation_task(cfg, out, config_hash)?,
        Task::Classical => classical_task(cfg, out)?,
        Task::Kernels => kernels_task(cfg, out)?,
    };
    if let Some(s) = surface(cfg, out)? {
        res.summary["potential_surface"] = s;
    }
    Ok(res)
}

fn model(cfg: &ExperimentConfig) -> Result<(EnergySpec, SymplecticData)> {
    Ok((cfg.energy()?, cfg.symplectic()?))
}

fn trajectory(cfg: &ExperimentConfig, qcf: bool) -> Result<(Trajectory, Rhs)> {
    let (energy, sym) = model(cfg)?;
    let grid = cfg.grid()?;
    let opts = cfg.rhs_options()?;
    let init = cfg.initial()?;
    let (rhs, f0) = if qcf {
        let rhs = match cfg.rhs.kind {
            crate::config::RhsKindConfig::General => Rhs::qcf_general(&energy, &sym, &grid, opts)?,
            crate::config::RhsKindConfig::LinearCoupling => Rhs::qcf_linear_coupling(&energy, &sym, opts)?,
        };
        (rhs, init.sample_qcf(&grid))
    } else {
        (Rhs::qpdf_linear_coupling(&energy, &sym, opts)?, init.sample_qpdf(&grid)?)
    };
    let traj = evolve(&f0, &rhs, &cfg.evolution()?)?;
    Ok((traj, rhs))
}

fn trajectory_outputs(
    traj: &Trajectory,
    rhs: &Rhs,
    init: &GaussianState,
    out: &Path,
    config_hash: &str,
    accuracy: usize,
) -> Result<TaskOutput> {
    traj.write(&out.join("trajectory"), config_hash)?;
    let first = &traj.snapshots[0];
    let n = first.grid.ndim();
    let qcf = first.kind == GridKind::Qcf;
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("mean_{i}")));
    if !qcf {
        for i in 0..n {
            for j in i..n {
                header.push(format!("cov_{i}{j}"));
            }
        }
    }
    let mut body = Vec::new();
    for s in &traj.snapshots {
        let mut row = vec![s.time];
        if qcf {
            row.extend(qcf_mean(s, accuracy)?);
        } else {
            let (_, mean, cov) = grid_moments(s);
            row.extend(mean.iter());
            for i in 0..n {
                for j in i..n {
                    row.push(cov[(i, j)]);
                }
            }
        }
        body.push(row);
    }
    csv(&out.join("moments.csv"), &header, &body)?;
    let inv: Vec<Vec<f64>> = traj.invariants.iter().map(|s| vec![s.t, s.normalization, s.symmetry, s.max_abs]).collect();
    csv(
        &out.join("invariants.csv"),
        &["t", "normalization", "symmetry", "max_abs"].map(String::from),
        &inv,
    )?;
    let max = |f: fn(&weylflow::dynamics::InvariantSample) -> f64| traj.invariants.iter().map(f).fold(0.0, f64::max);
    let mut summary = json!({
        "snapshots": traj.snapshots.len(),
        "t_final": traj.last().time,
        "dt": traj.dt,
        "scheme": traj.scheme,
        "stability_bound": stability_bound(first, rhs, 1.0),
        "max_normalization_error": max(|s| s.normalization),
        "max_symmetry_residual": max(|s| s.symmetry),
        "interpolation_excursions": traj.excursions,
    });
    if !rhs.has_integral() {
        // the linear flow is Gaussian-preserving: compare against the closed form
        let exact = propagate_gaussian(&rhs.dyn_, init, traj.last().time - first.time);
        let grid = &traj.last().grid;
        let reference = if qcf { exact.sample_qcf(grid) } else { exact.sample_qpdf(grid)? };
        summary["closed_form_max_error"] = json!(traj.last().max_abs_diff(&reference));
    }
    let violations = traj.aborted.iter().cloned().collect();
    Ok(TaskOutput { summary, violations })
}

fn evolve_task(cfg: &ExperimentConfig, out: &Path, config_hash: &str, qcf: bool) -> Result<TaskOutput> {
    let (traj, rhs) = trajectory(cfg, qcf)?;
    trajectory_outputs(&traj, &rhs, &cfg.initial()?, out, config_hash, cfg.rhs.accuracy)
}

fn gaussian_task(cfg: &ExperimentConfig, out: &Path) -> Result<TaskOutput> {
    let (energy, sym) = model(cfg)?;
    let dyn_ = compute_linear_dynamics(&energy, &sym)?;
    let ss = steady_state(&dyn_)?;
    let margin = ss.state.uncertainty_margin(&sym.theta);
    let doc = json!({
        "mu0": ss.state.mu.as_slice(),
        "sigma0": rows(&ss.state.sigma),
        "lyapunov_residual": ss.lyapunov_residual,
        "controllable": ss.controllable,
        "singular": ss.singular,
        "spectral_abscissa": dyn_.spectral_abscissa(),
        "uncertainty_margin": margin,
        "a": rows(&dyn_.a),
        "b": rows(&dyn_.b_disp),
    });
    write_json(&out.join("gaussian.json"), &doc)?;
    if let Some(g) = &cfg.grid {
        let grid = g.build(cfg.n(), "grid")?;
        if !ss.singular {
            write_grid(&ss.state.sample_qpdf(&grid)?, &out.join("steady_qpdf.bin"), json!({"what": "invariant QPDF"}))?;
        }
        if grid.is_origin_centered() {
            let u = dual_grid(&grid)?;
            write_grid(&ss.state.sample_qcf(&u), &out.join("steady_qcf.bin"), json!({"what": "invariant QCF"}))?;
        }
    }
    let mut violations = Vec::new();
    if margin < -cfg.tolerances.psd {
        violations.push(format!("Σ₀ + iΘ is not positive semi-definite (min eigenvalue {margin:.3e})"));
    }
    if ss.lyapunov_residual > 1e-10 {
        violations.push(format!("Lyapunov residual {:.3e} exceeds 1e-10", ss.lyapunov_residual));
    }
    Ok(TaskOutput { summary: doc, violations })
}

fn invariant_task(cfg: &ExperimentConfig, out: &Path) -> Result<TaskOutput> {
    let (energy, sym) = model(cfg)?;
    let grid = cfg.grid()?;
    let inv = &cfg.invariant;
    let qcf_grid = match (&inv.qcf_grid, inv.sides) {
        (_, Sides::Qpdf) => None,
        (Some(g), _) => Some(g.build(cfg.n(), "invariant.qcf_grid")?),
        (None, _) => Some(dual_grid(&grid)?),
    };
    let qpdf_grid = (inv.sides != Sides::Qcf).then_some(grid);
    let scfg = SeriesConfig {
        order: inv.order,
        rhs: cfg.rhs_options()?,
        tol_tail: inv.tol_tail,
        ..Default::default()
    };
    let series = invariant_series(&energy, &sym, qcf_grid.as_ref(), qpdf_grid.as_ref(), &scfg)?;
    let summary = invariant_summary(&series)?;
    let sj = serde_json::to_value(&summary)?;
    series.write(&out.join("series"), &sj)?;
    let mut violations = Vec::new();
    if summary.max_term_mass > cfg.tolerances.norm {
        violations.push(format!("series term mass {:.3e} exceeds {:.0e}", summary.max_term_mass, cfg.tolerances.norm));
    }
    if summary.max_hermitian_residual > cfg.tolerances.sym {
        violations.push(format!("Hermitian residual {:.3e}", summary.max_hermitian_residual));
    }
    Ok(TaskOutput { summary: sj, violations })
}

fn fit_task(cfg: &ExperimentConfig, out: &Path, config_hash: &str) -> Result<TaskOutput> {
    let (energy, sym) = model(cfg)?;
    let init = match &cfg.fit.init {
        Some(b) => b.build(cfg.n(), "fit.init")?,
        None => cfg.initial()?,
    };
    let mho = match cfg.fit.source {
        FitSource::Evolve => {
            let (traj, rhs) = trajectory(cfg, false)?;
            trajectory_outputs(&traj, &rhs, &cfg.initial()?, out, config_hash, cfg.rhs.accuracy)?;
            traj.into_checked()?.last().clone()
        }
        FitSource::Invariant => {
            let scfg = SeriesConfig { order: 1, rhs: cfg.rhs_options()?, ..Default::default() };
            let series = invariant_series(&energy, &sym, None, Some(&cfg.grid()?), &scfg)?;
            let sum = series.qpdf_partial_sum(1).ok_or_else(|| anyhow!("series has no QPDF terms"))?;
            write_grid(&sum, &out.join("fit_input.bin"), json!({"what": "℧₀ + ℧₁"}))?;
            sum
        }
    };
    let f = &cfg.fit;
    let opts = FitOptions {
        damping: f.damping,
        max_iter: f.max_iter,
        tol: f.tol,
        tol_tail: f.tol_tail,
        tol_psd: cfg.tolerances.psd,
    };
    let r = fit_gaussian(&mho, &init, &sym.theta, &opts)?;
    let doc = serde_json::to_value(&r)?;
    write_json(&out.join("fit.json"), &doc)?;
    let mut violations = Vec::new();
    if !r.uncertainty_ok {
        violations.push(format!("fitted Σ* + iΘ is not positive semi-definite ({:.3e})", r.uncertainty_margin));
    }
    if !r.converged {
        log::warn!("Gaussian fit did not converge in {} iterations", r.iterations);
    }
    Ok(TaskOutput { summary: doc, violations })
}

fn dissipation_task(cfg: &ExperimentConfig, out: &Path, config_hash: &str) -> Result<TaskOutput> {
    let d = &cfg.dissipation;
    let qcf = d.kind == DissipationKind::Norm;
    let (traj, rhs) = trajectory(cfg, qcf)?;
    let base = trajectory_outputs(&traj, &rhs, &cfg.initial()?, out, config_hash, cfg.rhs.accuracy)?;
    let traj = traj.into_checked()?;
    let n = cfg.n();
    let doc = match d.kind {
        DissipationKind::Norm => {
            let p0 = match &d.p0 {
                Some(p) => Mat::from_fn(n, n, |i, j| p[i][j]),
                None => Mat::zeros(n, n),
            };
            let rep = dissipation_balance(&traj, &rhs, &p0, d.tol_tail)?;
            let body: Vec<Vec<f64>> = (0..rep.times.len())
                .map(|k| {
                    vec![
                        rep.times[k],
                        rep.weighted_norm[k],
                        rep.time_derivative[k],
                        rep.transport[k],
                        rep.trace_term[k],
                        rep.coupling_term[k],
                        rep.residual[k],
                    ]
                })
                .collect();
            csv(
                &out.join("dissipation.csv"),
                &["t", "weighted_norm", "time_derivative", "transport", "trace_term", "coupling_term", "residual"]
                    .map(String::from),
                &body,
            )?;
            serde_json::to_value(&rep)?
        }
        DissipationKind::Chi2 => {
            let path = match &d.reference {
                Some(r) => RefPath::Fixed(r.build(n, "dissipation.reference")?),
                None => RefPath::Fitted {
                    init: cfg.initial()?,
                    theta: cfg.symplectic()?.theta,
                    opts: FitOptions { tol_tail: d.tol_tail, ..Default::default() },
                },
            };
            let rep = dissipation_chi2(&traj, &rhs, &path, d.tol_tail)?;
            let body: Vec<Vec<f64>> = (0..rep.times.len())
                .map(|k| {
                    vec![
                        rep.times[k],
                        rep.divergence[k],
                        rep.time_derivative[k],
                        rep.mu_transport[k],
                        rep.sigma_transport[k],
                        rep.bracket[k],
                        rep.coupling[k],
                        rep.residual[k],
                    ]
                })
                .collect();
            csv(
                &out.join("dissipation.csv"),
                &["t", "divergence", "time_derivative", "mu_transport", "sigma_transport", "bracket", "coupling", "residual"]
                    .map(String::from),
                &body,
            )?;
            serde_json::to_value(&rep)?
        }
    };
    write_json(&out.join("dissipation.json"), &doc)?;
    let summary = json!({"trajectory": base.summary, "dissipation": doc});
    Ok(TaskOutput { summary, violations: base.violations })
}

fn classical_task(cfg: &ExperimentConfig, out: &Path) -> Result<TaskOutput> {
    let spec = cfg.classical_spec()?;
    let c = &cfg.classical;
    let samples = random_canonical_samples(spec.n(), spec.m(), c.canonical_samples, cfg.seed);
    let canon = canonical_identity_check(&spec, &samples);
    let init = match &cfg.initial {
        Some(b) => InitialCondition::gaussian(&b.build(cfg.n(), "initial")?),
        None => InitialCondition::Point(vec![0.0; cfg.n()]),
    };
    let sde = SdeConfig {
        dt: c.dt,
        t_end: c.t_end,
        paths: c.paths,
        seed: cfg.seed,
        record_every: c.record_every,
    };
    let mc = simulate_sde(&spec, &init, &sde)?;
    mc.write_csv(&out.join("moments.csv"))?;
    let mut summary = json!({
        "canonical": canon,
        "paths": mc.paths,
        "seed": mc.seed,
        "dt": mc.dt,
        "final_mean": mc.final_mean(),
        "final_mean_se": mc.mean_se.last(),
    });
    // without a potential the linear moment equations are an exact oracle
    if spec.energy.potential_terms.is_empty() && cfg.initial.is_some() {
        let exact = propagate_gaussian(&spec.linear_dynamics()?, &cfg.initial()?, c.t_end);
        let se = mc.mean_se.last().expect("at least one record");
        let z: Vec<f64> = (0..cfg.n()).map(|i| (mc.final_mean()[i] - exact.mu[i]) / se[i]).collect();
        summary["moment_ode_mean"] = json!(exact.mu.as_slice());
        summary["mean_z_scores"] = json!(z);
    }
    if !c.hbars.is_empty() {
        let hcfg = HbarSweepConfig {
            hbars: c.hbars.clone(),
            grid: cfg.grid()?,
            evolution: cfg.evolution()?,
            rhs: cfg.rhs_options()?,
            sde,
        };
        let rep = hbar_sweep(&spec, &cfg.initial()?, &hcfg)?;
        let v = serde_json::to_value(&rep)?;
        write_json(&out.join("hbar_sweep.json"), &v)?;
        summary["hbar_sweep"] = v;
    }
    write_json(&out.join("classical.json"), &summary)?;
    let mut violations = Vec::new();
    if !canon.passes(1e-12) {
        violations.push(format!(
            "canonical identities: can1 {:.3e}, φ {:.3e}, midpoint {:.3e} exceed 1e-12",
            canon.can1_max_rel, canon.phi_max_rel, canon.phi_midpoint_max_rel
        ));
    }
    Ok(TaskOutput { summary, violations })
}

fn kernels_task(cfg: &ExperimentConfig, out: &Path) -> Result<TaskOutput> {
    let (energy, sym) = model(cfg)?;
    let grid = cfg.grid()?;
    let init = cfg.initial()?;
    let images = energy
        .potential_terms
        .iter()
        .map(|t| MoyalImage::new(&init, t, &sym))
        .collect::<weylflow::Result<Vec<_>>>()?;
    let img = GridFunction::from_fn(grid.clone(), GridKind::Generic, |x| {
        Complex64::new(images.iter().map(|m| m.eval(x)).sum(), 0.0)
    });
    write_grid(&img, &out.join("moyal_image.bin"), json!({"what": "Moyal image of the initial Gaussian"}))?;
    let mho = init.sample_qpdf(&grid)?;
    write_grid(&mho, &out.join("initial_qpdf.bin"), json!({"what": "initial QPDF"}))?;
    let summary = json!({
        "terms": images.len(),
        "moyal_image_integral": img.integral().re,
        "moyal_image_max": img.max_abs(),
    });
    let mut violations = Vec::new();
    if img.integral().re.abs() > cfg.tolerances.norm {
        violations.push(format!("Moyal image does not integrate to zero ({:.3e})", img.integral().re));
    }
    Ok(TaskOutput { summary, violations })
}

/// `h₀` over the axes of the first potential term with all other
/// coordinates at zero, written when a `[surface]` block is present.
fn surface(cfg: &ExperimentConfig, out: &Path) -> Result<Option<Value>> {
    let Some(s) = &cfg.surface else { return Ok(None) };
    let energy = cfg.classical_energy()?;
    let term = &energy.potential_terms[0];
    let grid = Grid::new(vec![s.points | 1; 2], s.lo.clone(), s.hi.clone())?;
    let n = cfg.n();
    let f = GridFunction::from_fn(grid.clone(), GridKind::Generic, |q| {
        let x = term.lift(q, n);
        Complex64::new(energy.hamiltonian(&x), 0.0)
    });
    write_grid(&f, &out.join("potential_surface.bin"), json!({"what": "potential energy", "axes": term.axes}))?;
    // strict local minima of the sampled surface
    let d = &grid.dims;
    let mut minima = Vec::new();
    for i in 1..d[0] - 1 {
        for j in 1..d[1] - 1 {
            let v = f.values[grid.ravel(&[i, j])].re;
            let lower = (-1i64..=1)
                .flat_map(|a| (-1i64..=1).map(move |b| (a, b)))
                .filter(|&(a, b)| (a, b) != (0, 0))
                .all(|(a, b)| f.values[grid.ravel(&[(i as i64 + a) as usize, (j as i64 + b) as usize])].re > v);
            if lower {
                minima.push(vec![grid.coord(0, i), grid.coord(1, j), v]);
            }
        }
    }
    Ok(Some(json!({"local_minima": minima})))
}
