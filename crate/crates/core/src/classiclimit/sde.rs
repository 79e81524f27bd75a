//! Euler–Maruyama Monte Carlo for the classical limit SDE
//! `dX = f₀(X)dt + g₀dW` with independent standard Wiener increments.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classiclimit::spec::{ClassicalSpec, DriftField};
use crate::error::{Result, WeylError};
use crate::linalg::Mat;
use crate::phase::gaussian::GaussianState;

/// Paths per reduction leaf. The chunk sums are combined in index order, so
/// results do not depend on the number of worker threads.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    Point(Vec<f64>),
    Gaussian { mu: Vec<f64>, sigma: Vec<f64> },
}

impl InitialCondition {
    pub fn gaussian(state: &GaussianState) -> Self {
        Self::Gaussian {
            mu: state.mu.as_slice().to_vec(),
            sigma: state.sigma.as_slice().to_vec(),
        }
    }

    fn centre(&self) -> &[f64] {
        match self {
            Self::Point(x) | Self::Gaussian { mu: x, .. } => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub dt: f64,
    pub t_end: f64,
    pub paths: usize,
    pub seed: u64,
    /// Record moments every this many steps (the final time is always kept).
    pub record_every: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            paths: 10_000,
            seed: 0,
            record_every: 100,
        }
    }
}

impl SdeConfig {
    fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.t_end >= 0.0) {
            return Err(WeylError::InvalidInput("dt must be positive and t_end nonnegative".into()));
        }
        if self.paths == 0 || self.record_every == 0 {
            return Err(WeylError::InvalidInput("paths and record_every must be at least 1".into()));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(WeylError::InvalidInput(format!(
                "t_end = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

/// Sample mean and covariance (row-major) at each recorded time, with the
/// standard errors of every entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    pub n: usize,
    pub paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub mean: Vec<Vec<f64>>,
    pub mean_se: Vec<Vec<f64>>,
    pub cov: Vec<Vec<f64>>,
    pub cov_se: Vec<Vec<f64>>,
}

impl MomentTrajectory {
    pub fn final_mean(&self) -> &[f64] {
        self.mean.last().expect("at least one record")
    }

    pub fn final_cov(&self) -> Mat {
        Mat::from_row_slice(self.n, self.n, self.cov.last().expect("at least one record"))
    }

    /// One row per recorded time: `t, mean_i, se_mean_i, cov_ij, se_cov_ij`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.n;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut head = vec!["t".to_string()];
        for i in 0..n {
            head.push(format!("mean_{i}"));
            head.push(format!("se_mean_{i}"));
        }
        for i in 0..n {
            for j in i..n {
                head.push(format!("cov_{i}{j}"));
                head.push(format!("se_cov_{i}{j}"));
            }
        }
        writeln!(out, "{}", head.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:.12e}")];
            for i in 0..n {
                row.push(format!("{:.12e}", self.mean[k][i]));
                row.push(format!("{:.12e}", self.mean_se[k][i]));
            }
            for i in 0..n {
                for j in i..n {
                    row.push(format!("{:.12e}", self.cov[k][i * n + j]));
                    row.push(format!("{:.12e}", self.cov_se[k][i * n + j]));
                }
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Raw power sums of `z = x − shift`: `Σz_i`, `Σz_iz_j`, `Σz_i²z_j`, `Σz_i²z_j²`.
#[derive(Clone)]
struct Sums {
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    s4: Vec<f64>,
}

impl Sums {
    fn zeros(n: usize) -> Self {
        Self {
            s1: vec![0.0; n],
            s2: vec![0.0; n * n],
            s3: vec![0.0; n * n],
            s4: vec![0.0; n * n],
        }
    }

    fn push(&mut self, z: &[f64]) {
        let n = z.len();
        for i in 0..n {
            self.s1[i] += z[i];
            for j in 0..n {
                let p = z[i] * z[j];
                self.s2[i * n + j] += p;
                self.s3[i * n + j] += z[i] * p;
                self.s4[i * n + j] += p * p;
            }
        }
    }

    fn merge(&mut self, o: &Sums) {
        for (a, b) in [(&mut self.s1, &o.s1), (&mut self.s2, &o.s2), (&mut self.s3, &o.s3), (&mut self.s4, &o.s4)] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

fn initial_sampler(init: &InitialCondition, n: usize) -> Result<Option<Mat>> {
    match init {
        InitialCondition::Point(x) => {
            if x.len() != n {
                return Err(WeylError::Dimension(format!("initial point must have {n} entries")));
            }
            Ok(None)
        }
        InitialCondition::Gaussian { mu, sigma } => {
            if mu.len() != n || sigma.len() != n * n {
                return Err(WeylError::Dimension(format!("initial Gaussian must be {n}-dimensional")));
            }
            let s = Mat::from_column_slice(n, n, sigma);
            let chol = nalgebra::Cholesky::new(s)
                .ok_or_else(|| WeylError::NotPositiveDefinite("initial covariance".into()))?;
            Ok(Some(chol.l()))
        }
    }
}

fn run_chunk(
    field: &DriftField,
    init: &InitialCondition,
    chol: Option<&Mat>,
    cfg: &SdeConfig,
    steps: usize,
    records: usize,
    range: std::ops::Range<usize>,
) -> Vec<Sums> {
    let (n, m) = (field.n(), field.m());
    let shift = init.centre();
    let sqdt = cfg.dt.sqrt();
    let g = &field.dispersion;
    let mut sums = vec![Sums::zeros(n); records];
    let mut x = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut dw = vec![0.0; m];
    for p in range {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(p as u64);
        x.copy_from_slice(shift);
        if let Some(l) = chol {
            let e: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            for i in 0..n {
                x[i] += (0..=i).map(|j| l[(i, j)] * e[j]).sum::<f64>();
            }
        }
        let mut rec = 0;
        let record = |x: &[f64], z: &mut [f64], s: &mut Sums| {
            for i in 0..n {
                z[i] = x[i] - shift[i];
            }
            s.push(z);
        };
        record(&x, &mut z, &mut sums[rec]);
        rec += 1;
        for step in 1..=steps {
            field.eval_into(&x, &mut f);
            for w in dw.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *w = sqdt * e;
            }
            for i in 0..n {
                x[i] += f[i] * cfg.dt + (0..m).map(|k| g[(i, k)] * dw[k]).sum::<f64>();
            }
            if step % cfg.record_every == 0 || step == steps {
                record(&x, &mut z, &mut sums[rec]);
                rec += 1;
            }
        }
    }
    sums
}

/// Monte Carlo moments of the limit SDE. Each path draws from its own ChaCha
/// stream `(seed, path index)`, so reruns are bit-identical for any thread count.
pub fn simulate_sde(spec: &ClassicalSpec, init: &InitialCondition, cfg: &SdeConfig) -> Result<MomentTrajectory> {
    let field = DriftField::new(spec)?;
    let n = field.n();
    let steps = cfg.steps()?;
    let chol = initial_sampler(init, n)?;
    let mut times = vec![0.0];
    for step in 1..=steps {
        if step % cfg.record_every == 0 || step == steps {
            times.push(step as f64 * cfg.dt);
        }
    }
    let records = times.len();
    let chunks: Vec<Vec<Sums>> = (0..cfg.paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(cfg.paths);
            run_chunk(&field, init, chol.as_ref(), cfg, steps, records, range)
        })
        .collect();
    let mut total = vec![Sums::zeros(n); records];
    for chunk in &chunks {
        for (t, s) in total.iter_mut().zip(chunk) {
            t.merge(s);
        }
    }
    let shift = init.centre();
    let np = cfg.paths as f64;
    let mut out = MomentTrajectory {
        n,
        paths: cfg.paths,
        seed: cfg.seed,
        dt: cfg.dt,
        times,
        mean: Vec::with_capacity(records),
        mean_se: Vec::with_capacity(records),
        cov: Vec::with_capacity(records),
        cov_se: Vec::with_capacity(records),
    };
    let bessel = if cfg.paths > 1 { np / (np - 1.0) } else { 0.0 };
    for s in &total {
        let p: Vec<f64> = s.s1.iter().map(|v| v / np).collect();
        let mut cov = vec![0.0; n * n];
        let mut cov_se = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let c = s.s2[k] / np - p[i] * p[j];
                // E[(a−p)²(b−q)²] from raw sums of a = z_i, b = z_j
                let a2b = s.s3[k] / np;
                let ab2 = s.s3[j * n + i] / np;
                let mu4 = s.s4[k] / np - 2.0 * p[j] * a2b - 2.0 * p[i] * ab2
                    + p[j] * p[j] * s.s2[i * n + i] / np
                    + p[i] * p[i] * s.s2[j * n + j] / np
                    + 4.0 * p[i] * p[j] * s.s2[k] / np
                    - 3.0 * p[i] * p[i] * p[j] * p[j];
                cov[k] = c * bessel;
                cov_se[k] = ((mu4 - c * c).max(0.0) / np).sqrt();
            }
        }
        out.mean.push((0..n).map(|i| shift[i] + p[i]).collect());
        out.mean_se.push((0..n).map(|i| (cov[i * n + i].max(0.0) / np).sqrt()).collect());
        out.cov.push(cov);
        out.cov_se.push(cov_se);
    }
    Ok(out)
}
