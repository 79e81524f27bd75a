//! Experiment configuration: TOML with a JSON fallback, dotted `--set`
//! overrides, and validation of every dimension before any compute.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use weylflow::classiclimit::ClassicalSpec;
use weylflow::dynamics::evolve::{EvolutionConfig, Scheme};
use weylflow::dynamics::rhs::RhsOptions;
use weylflow::kernels::{EnergySpec, GaussianPotentialTerm};
use weylflow::linalg::{self, Mat, Vector};
use weylflow::phase::gaussian::GaussianState;
use weylflow::phase::grid::{Boundary, Grid, Interpolation};
use weylflow::phase::symplectic::SymplecticData;
use weylflow::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    EvolveQcf,
    EvolveQpdf,
    Gaussian,
    Invariant,
    Fit,
    Dissipation,
    Classical,
    Kernels,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::EvolveQcf => "evolve-qcf",
            Task::EvolveQpdf => "evolve-qpdf",
            Task::Gaussian => "gaussian",
            Task::Invariant => "invariant",
            Task::Fit => "fit",
            Task::Dissipation => "dissipation",
            Task::Classical => "classical",
            Task::Kernels => "kernels",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// `Θ = ½J_n`, `J = J_m`.
    #[default]
    Standard,
    /// `Θ = (ħ/2)Ξ`, `J = (ħ/2)Υ`.
    Hbar,
    /// `theta` and `j_field` given as matrices.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub c: f64,
    pub gamma: Vec<f64>,
    pub lambda: Vec<Vec<f64>>,
    /// Coordinates the potential depends on; defaults to the first `d`.
    #[serde(default)]
    pub axes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub theta_mode: ThetaMode,
    #[serde(default)]
    pub theta: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub j_field: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub hbar: f64,
    /// Defaults to `J_n`.
    #[serde(default)]
    pub xi: Option<Vec<Vec<f64>>>,
    /// Defaults to `J_m`.
    #[serde(default)]
    pub ups: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub n_coupling: Vec<Vec<f64>>,
    #[serde(default)]
    pub potential: Vec<PotentialConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: Vec<usize>,
    #[serde(default)]
    pub half_width: Option<Vec<f64>>,
    #[serde(default)]
    pub lo: Option<Vec<f64>>,
    #[serde(default)]
    pub hi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionBlock {
    #[serde(default)]
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "ten")]
    pub snapshot_every: usize,
    #[serde(default = "half")]
    pub cfl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RhsKindConfig {
    #[default]
    LinearCoupling,
    /// Tabulated kernel `V` (n = 2, QCF only).
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsBlock {
    #[serde(default)]
    pub kind: RhsKindConfig,
    #[serde(default = "four")]
    pub accuracy: usize,
    #[serde(default = "four")]
    pub interp_points: usize,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default = "sixteen")]
    pub quad_nodes: usize,
}

impl Default for RhsBlock {
    fn default() -> Self {
        Self {
            kind: RhsKindConfig::default(),
            accuracy: 4,
            interp_points: 4,
            boundary: Boundary::default(),
            quad_nodes: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBlock {
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sides {
    Qcf,
    #[default]
    Qpdf,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantBlock {
    #[serde(default = "one_usize")]
    pub order: usize,
    #[serde(default)]
    pub sides: Sides,
    /// Frequency grid for the QCF side; defaults to the dual of `grid`.
    #[serde(default)]
    pub qcf_grid: Option<GridConfig>,
    #[serde(default = "tail")]
    pub tol_tail: f64,
}

impl Default for InvariantBlock {
    fn default() -> Self {
        Self {
            order: 1,
            sides: Sides::default(),
            qcf_grid: None,
            tol_tail: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitSource {
    /// Final snapshot of a QPDF evolution from `initial`.
    #[default]
    Evolve,
    /// `℧₀ + ℧₁` of the invariant series.
    Invariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitBlock {
    #[serde(default)]
    pub source: FitSource,
    #[serde(default = "half")]
    pub damping: f64,
    #[serde(default = "five_hundred")]
    pub max_iter: usize,
    #[serde(default = "fit_tol")]
    pub tol: f64,
    #[serde(default = "tail")]
    pub tol_tail: f64,
    /// Starting point; defaults to `initial`.
    #[serde(default)]
    pub init: Option<GaussianBlock>,
}

impl Default for FitBlock {
    fn default() -> Self {
        Self {
            source: FitSource::default(),
            damping: 0.5,
            max_iter: 500,
            tol: 1e-8,
            tol_tail: 1e-8,
            init: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DissipationKind {
    /// χ²-divergence along a QPDF trajectory.
    #[default]
    Chi2,
    /// Weighted norm `⦀Φ⦀_P` along a QCF trajectory.
    Norm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipationBlock {
    #[serde(default)]
    pub kind: DissipationKind,
    /// Fixed χ² reference; refitted at every snapshot when absent.
    #[serde(default)]
    pub reference: Option<GaussianBlock>,
    /// Initial weight `P(0)` of the norm relation.
    #[serde(default)]
    pub p0: Option<Vec<Vec<f64>>>,
    #[serde(default = "tail")]
    pub tol_tail: f64,
}

impl Default for DissipationBlock {
    fn default() -> Self {
        Self {
            kind: DissipationKind::default(),
            reference: None,
            p0: None,
            tol_tail: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalBlock {
    #[serde(default = "ten_thousand")]
    pub paths: usize,
    #[serde(default = "milli")]
    pub dt: f64,
    #[serde(default = "one")]
    pub t_end: f64,
    #[serde(default = "hundred")]
    pub record_every: usize,
    #[serde(default = "ten_thousand")]
    pub canonical_samples: usize,
    /// Planck constants of the quantum/classical sweep (n = 2 only).
    #[serde(default)]
    pub hbars: Vec<f64>,
}

impl Default for ClassicalBlock {
    fn default() -> Self {
        Self {
            paths: 10_000,
            dt: 1e-3,
            t_end: 1.0,
            record_every: 100,
            canonical_samples: 10_000,
            hbars: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceBlock {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default = "surface_points")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads, 0 = all cores.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub system: SystemConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub evolution: Option<EvolutionBlock>,
    #[serde(default)]
    pub rhs: RhsBlock,
    #[serde(default)]
    pub initial: Option<GaussianBlock>,
    #[serde(default)]
    pub invariant: InvariantBlock,
    #[serde(default)]
    pub fit: FitBlock,
    #[serde(default)]
    pub dissipation: DissipationBlock,
    #[serde(default)]
    pub classical: ClassicalBlock,
    /// Potential-energy surface over the axes of the first potential term.
    #[serde(default)]
    pub surface: Option<SurfaceBlock>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn milli() -> f64 {
    1e-3
}
fn tail() -> f64 {
    1e-8
}
fn fit_tol() -> f64 {
    1e-8
}
fn one_usize() -> usize {
    1
}
fn four() -> usize {
    4
}
fn ten() -> usize {
    10
}
fn sixteen() -> usize {
    16
}
fn hundred() -> usize {
    100
}
fn surface_points() -> usize {
    101
}
fn five_hundred() -> usize {
    500
}
fn ten_thousand() -> usize {
    10_000
}

/// Parses a scalar or inline TOML value (`0.5`, `[1, 2]`, `"rk4_lines"`);
/// anything else is taken as a bare string.
fn parse_override_value(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("key v")).unwrap_or(Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{assignment}` must have the form key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` has an empty component");
    }
    let mut node = root;
    for part in &path[..path.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{part}` is not inside a table"))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| anyhow!("override `{key}` does not address a table entry"))?;
    obj.insert(path[path.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}

fn is_json(path: &Path, text: &str) -> bool {
    path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{')
}

/// Loads `path`, applies `overrides` and validates the result.
pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let json = is_json(path, &text);
    let cfg: ExperimentConfig = if overrides.is_empty() {
        // typed parse straight from the text keeps line/column diagnostics
        if json {
            serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("config {}", path.display()))?
        }
    } else {
        let mut tree: Value = if json {
            serde_json::from_str(&text).with_context(|| format!("config {}", path.display()))?
        } else {
            let t: toml::Table = toml::from_str(&text).with_context(|| format!("config {}", path.display()))?;
            serde_json::to_value(t)?
        };
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        serde_json::from_value(tree).with_context(|| format!("config {} after overrides", path.display()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize, what: &str) -> Result<Mat> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        bail!("{what} must be {r}x{c}");
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<Vector> {
    if v.len() != n {
        bail!("{what} must have {n} entries, got {}", v.len());
    }
    Ok(Vector::from_column_slice(v))
}

impl GridConfig {
    pub fn build(&self, n: usize, what: &str) -> Result<Grid> {
        if self.dims.len() != n {
            bail!("{what}.dims has {} entries but n = {n}", self.dims.len());
        }
        let (lo, hi) = match (&self.half_width, &self.lo, &self.hi) {
            (Some(h), None, None) => {
                if h.len() != n {
                    bail!("{what}.half_width must have {n} entries");
                }
                (h.iter().map(|x| -x).collect(), h.clone())
            }
            (None, Some(lo), Some(hi)) => (lo.clone(), hi.clone()),
            _ => bail!("{what} needs either half_width or both lo and hi"),
        };
        Grid::new(self.dims.clone(), lo, hi).map_err(|e| anyhow!("{what}: {e}"))
    }
}

impl GaussianBlock {
    pub fn build(&self, n: usize, what: &str) -> Result<GaussianState> {
        let mu = vector(&self.mu, n, &format!("{what}.mu"))?;
        let sigma = matrix(&self.sigma, n, n, &format!("{what}.sigma"))?;
        GaussianState::new(mu, sigma).map_err(|e| anyhow!("{what}: {e}"))
    }
}

impl ExperimentConfig {
    pub fn n(&self) -> usize {
        self.system.n
    }

    pub fn xi(&self) -> Result<Mat> {
        let n = self.system.n;
        match &self.system.xi {
            Some(x) => matrix(x, n, n, "system.xi"),
            None => Ok(linalg::symplectic_unit(n)),
        }
    }

    pub fn ups(&self) -> Result<Mat> {
        let m = self.system.m;
        match &self.system.ups {
            Some(x) => matrix(x, m, m, "system.ups"),
            None => Ok(linalg::symplectic_unit(m)),
        }
    }

    pub fn symplectic(&self) -> Result<SymplecticData> {
        let s = &self.system;
        let sym = match s.theta_mode {
            ThetaMode::Standard => SymplecticData::standard(s.n, s.m),
            ThetaMode::Hbar => SymplecticData::scaled(&self.xi()?, &self.ups()?, s.hbar),
            ThetaMode::Explicit => {
                let theta = s.theta.as_ref().ok_or_else(|| anyhow!("theta_mode = explicit needs system.theta"))?;
                let j = s.j_field.as_ref().ok_or_else(|| anyhow!("theta_mode = explicit needs system.j_field"))?;
                SymplecticData::new(matrix(theta, s.n, s.n, "system.theta")?, matrix(j, s.m, s.m, "system.j_field")?)
            }
        };
        sym.map_err(|e| anyhow!("system: {e}"))
    }

    /// Classical energy data as written in the config.
    pub fn classical_energy(&self) -> Result<EnergySpec> {
        let s = &self.system;
        let n = s.n;
        let b = match &s.b {
            Some(b) => vector(b, n, "system.b")?,
            None => Vector::zeros(n),
        };
        let r = matrix(&s.r, n, n, "system.r")?;
        let nc = matrix(&s.n_coupling, s.m, n, "system.n_coupling")?;
        let terms = s
            .potential
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let d = p.gamma.len();
                let lam = matrix(&p.lambda, d, d, &format!("system.potential[{k}].lambda"))?;
                let axes = p.axes.clone().unwrap_or_else(|| (0..d).collect());
                GaussianPotentialTerm::new(p.c, p.gamma.clone(), lam, axes)
                    .map_err(|e| anyhow!("system.potential[{k}]: {e}"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnergySpec::new(b, r, nc, terms))
    }

    /// Energy data entering the quantum dynamics: divided by `ħ` in `hbar`
    /// mode so that the classical limit keeps the drift fixed.
    pub fn energy(&self) -> Result<EnergySpec> {
        let e = self.classical_energy()?;
        Ok(match self.system.theta_mode {
            ThetaMode::Hbar => self.classical_spec_from(e)?.quantum_energy(self.system.hbar),
            _ => e,
        })
    }

    fn classical_spec_from(&self, e: EnergySpec) -> Result<ClassicalSpec> {
        ClassicalSpec::new(&self.xi()?, &self.ups()?, e, self.system.hbar).map_err(|e| anyhow!("system: {e}"))
    }

    pub fn classical_spec(&self) -> Result<ClassicalSpec> {
        self.classical_spec_from(self.classical_energy()?)
    }

    pub fn grid(&self) -> Result<Grid> {
        self.grid
            .as_ref()
            .ok_or_else(|| anyhow!("task {} needs a [grid] block", self.task.name()))?
            .build(self.n(), "grid")
    }

    pub fn initial(&self) -> Result<GaussianState> {
        self.initial
            .as_ref()
            .ok_or_else(|| anyhow!("task {} needs an [initial] block", self.task.name()))?
            .build(self.n(), "initial")
    }

    pub fn evolution(&self) -> Result<EvolutionConfig> {
        let e = self
            .evolution
            .as_ref()
            .ok_or_else(|| anyhow!("task {} needs an [evolution] block", self.task.name()))?;
        let cfg = EvolutionConfig {
            dt: e.dt,
            t_end: e.t_end,
            scheme: e.scheme,
            snapshot_every: e.snapshot_every,
            cfl: e.cfl,
            tolerances: self.tolerances,
        };
        cfg.validate().map_err(|err| anyhow!("evolution: {err}"))?;
        Ok(cfg)
    }

    pub fn rhs_options(&self) -> Result<RhsOptions> {
        let r = &self.rhs;
        if !(2..=10).contains(&r.interp_points) || r.interp_points % 2 == 1 {
            bail!("rhs.interp_points must be even and between 2 and 10");
        }
        if ![2, 4, 6, 8].contains(&r.accuracy) {
            bail!("rhs.accuracy must be one of 2, 4, 6, 8");
        }
        if r.quad_nodes == 0 {
            bail!("rhs.quad_nodes must be positive");
        }
        Ok(RhsOptions {
            accuracy: r.accuracy,
            interp: Interpolation::with_points(r.interp_points, r.boundary),
            quad_nodes: r.quad_nodes,
        })
    }

    /// Checks everything the selected task will read.
    pub fn validate(&self) -> Result<()> {
        let sym = self.symplectic()?;
        let energy = self.energy()?;
        energy.validate(&sym).map_err(|e| anyhow!("system: {e}"))?;
        self.rhs_options()?;
        match self.task {
            Task::EvolveQcf | Task::EvolveQpdf => {
                self.grid()?;
                self.initial()?;
                self.evolution()?;
            }
            Task::Gaussian => {
                if let Some(g) = &self.grid {
                    g.build(self.n(), "grid")?;
                }
            }
            Task::Invariant => {
                self.grid()?;
                if self.invariant.order == 0 {
                    bail!("invariant.order must be at least 1");
                }
                if let Some(g) = &self.invariant.qcf_grid {
                    g.build(self.n(), "invariant.qcf_grid")?;
                }
            }
            Task::Fit => {
                self.grid()?;
                self.initial()?;
                if self.fit.source == FitSource::Evolve {
                    self.evolution()?;
                }
                if let Some(i) = &self.fit.init {
                    i.build(self.n(), "fit.init")?;
                }
            }
            Task::Dissipation => {
                self.grid()?;
                self.initial()?;
                self.evolution()?;
                if let Some(r) = &self.dissipation.reference {
                    r.build(self.n(), "dissipation.reference")?;
                }
                if let Some(p) = &self.dissipation.p0 {
                    matrix(p, self.n(), self.n(), "dissipation.p0")?;
                }
            }
            Task::Classical => {
                self.classical_spec()?;
                let c = &self.classical;
                if c.paths == 0 || !(c.dt > 0.0) || c.record_every == 0 {
                    bail!("classical: paths, dt and record_every must be positive");
                }
                if !c.hbars.is_empty() {
                    if self.n() != 2 {
                        bail!("classical.hbars: the ħ sweep needs n = 2");
                    }
                    self.grid()?;
                    self.initial()?;
                    self.evolution()?;
                }
            }
            Task::Kernels => {
                self.grid()?;
                self.initial()?;
            }
        }
        if let Some(s) = &self.surface {
            let d = self.system.potential.first().map(|p| p.gamma.len()).unwrap_or(0);
            if d != 2 || s.lo.len() != 2 || s.hi.len() != 2 || s.points < 2 {
                bail!("surface needs a potential term with d = 2, two-entry lo/hi and points ≥ 2");
            }
        }
        Ok(())
    }
}
