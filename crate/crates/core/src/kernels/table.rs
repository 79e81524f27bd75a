//! Precomputed samples of the evolution kernel `V(u, Zᵀv)` on a grid.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Result, WeylError};
use crate::kernels::energy::EnergySpec;
use crate::kernels::symbols::kernel_v_on_support;
use crate::phase::grid::{Grid, GridFunction, GridKind};
use crate::phase::io;
use crate::phase::symplectic::SymplecticData;

/// Upper bound on stored samples (16 bytes each).
pub const MAX_TABLE_ENTRIES: usize = 40_000_000;

/// Kernel samples for one potential term. The `v` lattice consists of the
/// integer node offsets along the selected axes, so `u + Zᵀv` is again a
/// grid node and no interpolation is needed.
#[derive(Debug, Clone)]
pub struct TermTable {
    pub axes: Vec<usize>,
    /// Offsets (in grid nodes) along each selected axis.
    pub offsets: Vec<Vec<i64>>,
    /// Trapezoid weight per lattice node.
    pub weights: Vec<f64>,
    /// Row-major `[u][v]`.
    pub values: Vec<Complex64>,
}

#[derive(Debug, Clone)]
pub struct KernelTable {
    pub grid: Grid,
    pub terms: Vec<TermTable>,
}

impl KernelTable {
    pub fn build(grid: &Grid, spec: &EnergySpec, sym: &SymplecticData) -> Result<Self> {
        spec.validate(sym)?;
        if grid.ndim() != sym.n {
            return Err(WeylError::Dimension("kernel grid rank differs from n".into()));
        }
        let mut terms = Vec::new();
        for t in &spec.potential_terms {
            let prep = t.prepare();
            let d = t.d();
            let ranges: Vec<i64> = t.axes.iter().map(|&k| grid.dims[k] as i64 - 1).collect();
            let count: usize = ranges.iter().map(|r| (2 * r + 1) as usize).product();
            if count.saturating_mul(grid.len()) > MAX_TABLE_ENTRIES {
                return Err(WeylError::Unsupported(format!(
                    "kernel table would hold {} samples (limit {MAX_TABLE_ENTRIES})",
                    count.saturating_mul(grid.len())
                )));
            }
            let mut offsets = Vec::with_capacity(count);
            let mut idx: Vec<i64> = ranges.iter().map(|r| -r).collect();
            for _ in 0..count {
                offsets.push(idx.clone());
                for a in (0..d).rev() {
                    idx[a] += 1;
                    if idx[a] <= ranges[a] {
                        break;
                    }
                    idx[a] = -ranges[a];
                }
            }
            let h: Vec<f64> = t.axes.iter().map(|&k| grid.spacing(k)).collect();
            let cell: f64 = h.iter().product();
            let weights = vec![cell; count];
            let vs: Vec<Vec<f64>> = offsets
                .iter()
                .map(|o| o.iter().zip(&h).map(|(&j, &hk)| j as f64 * hk).collect())
                .collect();
            let values: Vec<Complex64> = (0..grid.len())
                .into_par_iter()
                .flat_map_iter(|flat| {
                    let u = grid.point(flat);
                    vs.iter()
                        .map(|v| kernel_v_on_support(&u, v, &prep, sym))
                        .collect::<Vec<_>>()
                })
                .collect();
            terms.push(TermTable {
                axes: t.axes.clone(),
                offsets,
                weights,
                values,
            });
        }
        Ok(Self {
            grid: grid.clone(),
            terms,
        })
    }

    /// `Σ_terms Σ_v w V(u, Zᵀv) φ(u + Zᵀv)` at every node, zero beyond the grid.
    pub fn apply(&self, phi: &GridFunction) -> Vec<Complex64> {
        let grid = &self.grid;
        let strides = grid.strides();
        (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let idx = grid.unravel(flat);
                let mut acc = Complex64::new(0.0, 0.0);
                for t in &self.terms {
                    let nv = t.offsets.len();
                    let row = &t.values[flat * nv..(flat + 1) * nv];
                    'v: for (j, off) in t.offsets.iter().enumerate() {
                        let mut target = flat as i64;
                        for (a, &k) in t.axes.iter().enumerate() {
                            let i = idx[k] as i64 + off[a];
                            if i < 0 || i >= grid.dims[k] as i64 {
                                continue 'v;
                            }
                            target += off[a] * strides[k] as i64;
                        }
                        acc += row[j] * phi.values[target as usize] * t.weights[j];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn entries(&self) -> usize {
        self.terms.iter().map(|t| t.values.len()).sum()
    }

    /// One binary file per term with a sidecar of kind `kernel` describing
    /// both the `u` grid and the `v` lattice.
    pub fn export(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for (k, t) in self.terms.iter().enumerate() {
            let v_dims: Vec<usize> = t
                .axes
                .iter()
                .map(|&a| 2 * self.grid.dims[a] - 1)
                .collect();
            let v_hi: Vec<f64> = t
                .axes
                .iter()
                .map(|&a| (self.grid.dims[a] - 1) as f64 * self.grid.spacing(a))
                .collect();
            let v_lo: Vec<f64> = v_hi.iter().map(|h| -h).collect();
            let mut dims = self.grid.dims.clone();
            dims.extend(&v_dims);
            let mut lo = self.grid.lo.clone();
            lo.extend(&v_lo);
            let mut hi = self.grid.hi.clone();
            hi.extend(&v_hi);
            let flat = GridFunction {
                grid: Grid::new(dims, lo, hi)?,
                values: t.values.clone(),
                kind: GridKind::Kernel,
                time: 0.0,
            };
            let path = dir.join(format!("kernel_term{k}.bin"));
            io::write_grid(
                &flat,
                &path,
                json!({
                    "u_grid": {"dims": self.grid.dims, "lo": self.grid.lo, "hi": self.grid.hi},
                    "v_grid": {"dims": v_dims, "lo": v_lo, "hi": v_hi, "axes": t.axes},
                    "layout": "row-major [u..., v...]",
                }),
            )?;
            paths.push(path);
        }
        Ok(paths)
    }
}
