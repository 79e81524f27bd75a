//! Regular Cartesian grids and complex-valued samples on them.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WeylError};
use crate::stencil;

pub const MAX_DIM: usize = 8;
const MAX_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    /// Hermitian-symmetric quasi-characteristic function.
    Qcf,
    /// Real-valued quasi-probability density.
    Qpdf,
    Generic,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Samples outside the grid are zero.
    #[default]
    ZeroPad,
    /// Off-grid points are clamped to the nearest face.
    Clamp,
}

/// Uniform grid with odd point counts on every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Grid {
    pub fn new(dims: Vec<usize>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_DIM {
            return Err(WeylError::Dimension(format!(
                "grid rank must be in 1..={MAX_DIM}, got {}",
                dims.len()
            )));
        }
        if lo.len() != dims.len() || hi.len() != dims.len() {
            return Err(WeylError::Dimension("grid bounds do not match dims".into()));
        }
        for (k, &d) in dims.iter().enumerate() {
            if d < 3 || d % 2 == 0 {
                return Err(WeylError::InvalidInput(format!(
                    "axis {k}: point count must be odd and >= 3, got {d}"
                )));
            }
            if !(hi[k] > lo[k]) {
                return Err(WeylError::InvalidInput(format!("axis {k}: need hi > lo")));
            }
        }
        Ok(Self { dims, lo, hi })
    }

    /// Origin-centred grid `[-half_width, half_width]` per axis.
    pub fn centered(dims: Vec<usize>, half_width: Vec<f64>) -> Result<Self> {
        let lo = half_width.iter().map(|h| -h).collect();
        Self::new(dims, lo, half_width)
    }

    pub fn cube(n: usize, points: usize, half_width: f64) -> Result<Self> {
        Self::centered(vec![points; n], vec![half_width; n])
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.dims[axis] - 1) as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.ndim()).map(|k| self.spacing(k)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacings().iter().product()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.spacing(axis)
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.ndim()];
        for k in (0..self.ndim().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.ndim()];
        for k in (0..self.ndim()).rev() {
            idx[k] = flat % self.dims[k];
            flat /= self.dims[k];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.coord(k, i))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|f| self.point(f)).collect()
    }

    pub fn is_origin_centered(&self) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .all(|(l, h)| (l + h).abs() <= 1e-12 * h.abs().max(1.0))
    }

    pub fn origin_index(&self) -> Option<usize> {
        if !self.is_origin_centered() {
            return None;
        }
        let idx: Vec<usize> = self.dims.iter().map(|d| d / 2).collect();
        Some(self.ravel(&idx))
    }

    /// Flat index of the node at `-point` on an origin-centred grid.
    pub fn mirror(&self, flat: usize) -> usize {
        let idx: Vec<usize> = self
            .unravel(flat)
            .iter()
            .zip(&self.dims)
            .map(|(&i, &d)| d - 1 - i)
            .collect();
        self.ravel(&idx)
    }

    pub fn on_boundary(&self, flat: usize) -> bool {
        self.unravel(flat)
            .iter()
            .zip(&self.dims)
            .any(|(&i, &d)| i == 0 || i == d - 1)
    }

    /// True when every index is at least `margin` away from each face.
    pub fn interior(&self, flat: usize, margin: usize) -> bool {
        self.unravel(flat)
            .iter()
            .zip(&self.dims)
            .all(|(&i, &d)| i >= margin && i + margin < d)
    }

    /// Composite trapezoid weight of a node (cell volume times ½ per face).
    pub fn trapezoid_weight(&self, flat: usize) -> f64 {
        let mut w = self.cell_volume();
        for (&i, &d) in self.unravel(flat).iter().zip(&self.dims) {
            if i == 0 || i == d - 1 {
                w *= 0.5;
            }
        }
        w
    }

    /// Same node layout with a different bounding box.
    pub fn matches(&self, other: &Grid) -> bool {
        self.dims == other.dims
            && self
                .lo
                .iter()
                .zip(&other.lo)
                .chain(self.hi.iter().zip(&other.hi))
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }

    /// Largest absolute coordinate per axis.
    pub fn half_widths(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().max(h.abs()))
            .collect()
    }

    pub fn memory_bytes(&self) -> usize {
        self.len() * std::mem::size_of::<Complex64>()
    }
}

/// Off-grid evaluation by tensor-product Lagrange interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interpolation {
    /// Number of nodes per axis (4 = cubic).
    pub points: usize,
    pub boundary: Boundary,
}

impl Default for Interpolation {
    fn default() -> Self {
        Self {
            points: 4,
            boundary: Boundary::ZeroPad,
        }
    }
}

impl Interpolation {
    pub fn cubic(boundary: Boundary) -> Self {
        Self { points: 4, boundary }
    }

    pub fn with_points(points: usize, boundary: Boundary) -> Self {
        assert!((2..=MAX_POINTS).contains(&points) && points % 2 == 0);
        Self { points, boundary }
    }
}

/// Samples on a [`Grid`] together with their interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub kind: GridKind,
    pub time: f64,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>, kind: GridKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(WeylError::Dimension(format!(
                "grid has {} nodes but {} values were given",
                grid.len(),
                values.len()
            )));
        }
        if matches!(kind, GridKind::Qcf | GridKind::Qpdf) && !grid.is_origin_centered() {
            return Err(WeylError::InvalidInput(
                "QCF/QPDF grids must be centred on the origin".into(),
            ));
        }
        Ok(Self {
            grid,
            values,
            kind,
            time: 0.0,
        })
    }

    pub fn zeros(grid: Grid, kind: GridKind) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self {
            grid,
            values,
            kind,
            time: 0.0,
        }
    }

    /// Samples `f` at every node (in parallel).
    pub fn from_fn<F>(grid: Grid, kind: GridKind, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|flat| f(&grid.point(flat)))
            .collect();
        Self {
            grid,
            values,
            kind,
            time: 0.0,
        }
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            grid: self.grid.clone(),
            values,
            kind: self.kind,
            time: self.time,
        }
    }

    pub fn with_kind(mut self, kind: GridKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn at_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn origin_value(&self) -> Option<Complex64> {
        self.grid.origin_index().map(|i| self.values[i])
    }

    /// `max_u |Φ(u) - conj(Φ(-u))|`.
    pub fn hermitian_residual(&self) -> f64 {
        (0..self.values.len())
            .map(|i| (self.values[i] - self.values[self.grid.mirror(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.im.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.norm()))
    }

    pub fn boundary_max(&self) -> f64 {
        (0..self.values.len())
            .filter(|&i| self.grid.on_boundary(i))
            .map(|i| self.values[i].norm())
            .fold(0.0, f64::max)
    }

    pub fn integral(&self) -> Complex64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.grid.trapezoid_weight(i))
            .sum()
    }

    /// Trapezoidal `∫ w(x) f(x) dx` with a pointwise weight.
    pub fn weighted_integral<W>(&self, w: W) -> Complex64
    where
        W: Fn(&[f64], Complex64) -> Complex64 + Sync,
    {
        (0..self.values.len())
            .into_par_iter()
            .map(|i| w(&self.grid.point(i), self.values[i]) * self.grid.trapezoid_weight(i))
            .sum()
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v.norm_sqr() * self.grid.trapezoid_weight(i))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        self.with_values(self.values.iter().map(|v| v * c).collect())
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn axpy(&self, c: f64, other: &GridFunction) -> Self {
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b * c)
                .collect(),
        )
    }

    /// Value at the node `idx` shifted by integer `offset`, zero outside.
    #[inline]
    fn node_or_zero(&self, idx: &[usize], axis: usize, offset: i64) -> Complex64 {
        let i = idx[axis] as i64 + offset;
        if i < 0 || i >= self.grid.dims[axis] as i64 {
            return Complex64::new(0.0, 0.0);
        }
        let strides = self.grid.strides();
        let flat = self.grid.ravel(idx) as i64 + offset * strides[axis] as i64;
        self.values[flat as usize]
    }

    /// Central finite-difference derivative of order `deriv` along `axis`
    /// with formal accuracy `accuracy`; nodes beyond the grid read as zero.
    pub fn derivative(&self, axis: usize, deriv: usize, accuracy: usize) -> Vec<Complex64> {
        let (half, w) = stencil::central(deriv, accuracy);
        let h = self.grid.spacing(axis).powi(deriv as i32);
        let dim = self.grid.dims[axis] as i64;
        let stride = self.grid.strides()[axis] as i64;
        (0..self.values.len())
            .into_par_iter()
            .map(|flat| {
                let i = self.grid.unravel(flat)[axis] as i64;
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, wk) in w.iter().enumerate() {
                    let off = k as i64 - half as i64;
                    let j = i + off;
                    if j >= 0 && j < dim {
                        acc += self.values[(flat as i64 + off * stride) as usize] * wk;
                    }
                }
                acc / h
            })
            .collect()
    }

    pub fn gradient(&self, accuracy: usize) -> Vec<Vec<Complex64>> {
        (0..self.grid.ndim())
            .map(|k| self.derivative(k, 1, accuracy))
            .collect()
    }

    /// Interpolated value at an arbitrary point. The flag is set when the
    /// point lies outside the grid box.
    pub fn interpolate(&self, x: &[f64], interp: &Interpolation) -> (Complex64, bool) {
        let n = self.grid.ndim();
        let p = interp.points;
        let mut base = [0i64; MAX_DIM];
        let mut counts = [0usize; MAX_DIM];
        let mut weights = [[0.0f64; MAX_POINTS]; MAX_DIM];
        let mut excursion = false;
        for k in 0..n {
            let h = self.grid.spacing(k);
            let dim = self.grid.dims[k] as i64;
            let mut s = (x[k] - self.grid.lo[k]) / h;
            if s < 0.0 || s > (dim - 1) as f64 {
                excursion = true;
                match interp.boundary {
                    Boundary::ZeroPad => {
                        if s < -1.0 || s > dim as f64 {
                            return (Complex64::new(0.0, 0.0), true);
                        }
                    }
                    Boundary::Clamp => s = s.clamp(0.0, (dim - 1) as f64),
                }
            }
            let fl = s.floor();
            let t = s - fl;
            if t.abs() < 1e-12 || (1.0 - t).abs() < 1e-12 {
                base[k] = s.round() as i64;
                counts[k] = 1;
                weights[k][0] = 1.0;
                continue;
            }
            let mut first = fl as i64 - (p as i64 / 2 - 1);
            if interp.boundary == Boundary::Clamp {
                first = first.clamp(0, (dim - p as i64).max(0));
            }
            let w = stencil::lagrange(s - first as f64, 0, p);
            base[k] = first;
            counts[k] = p;
            weights[k][..p].copy_from_slice(&w);
        }
        let strides = self.grid.strides();
        let total: usize = counts[..n].iter().product();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut idx = [0usize; MAX_DIM];
        'outer: for _ in 0..total {
            let mut w = 1.0;
            let mut flat = 0i64;
            let mut inside = true;
            for k in 0..n {
                let j = base[k] + idx[k] as i64;
                if j < 0 || j >= self.grid.dims[k] as i64 {
                    inside = false;
                }
                w *= weights[k][idx[k]];
                flat += j * strides[k] as i64;
            }
            if inside {
                acc += self.values[flat as usize] * w;
            }
            for k in (0..n).rev() {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    continue 'outer;
                }
                idx[k] = 0;
            }
        }
        (acc, excursion)
    }

    /// Copy with `values[i] = (v(-u) conj + v(u)) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let vals = (0..self.values.len())
            .map(|i| 0.5 * (self.values[i] + self.values[self.grid.mirror(i)].conj()))
            .collect();
        self.with_values(vals)
    }

    pub fn node_value(&self, idx: &[usize], axis: usize, offset: i64) -> Complex64 {
        self.node_or_zero(idx, axis, offset)
    }
}

/// Interpolation weights for displacing every node of a grid by the same
/// vector. Node positions differ by whole cells, so the fractional part of
/// the displacement and hence the Lagrange weights are shared by all nodes.
#[derive(Debug, Clone)]
pub struct ShiftStencil {
    /// Displacement in units of the spacing, per axis.
    cells: Vec<f64>,
    /// `(first offset, weights)` per axis.
    axes: Vec<(i64, Vec<f64>)>,
    /// Tensor-product entries: per-axis offsets, flat offset, weight.
    entries: Vec<(Vec<i64>, i64, f64)>,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl ShiftStencil {
    pub fn new(grid: &Grid, shift: &[f64], points: usize) -> Self {
        let n = grid.ndim();
        let mut cells = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        for k in 0..n {
            let s = shift[k] / grid.spacing(k);
            cells.push(s);
            let fl = s.floor();
            let t = s - fl;
            if t.abs() < 1e-12 || (1.0 - t).abs() < 1e-12 {
                axes.push((s.round() as i64, vec![1.0]));
            } else {
                let first = fl as i64 - (points as i64 / 2 - 1);
                axes.push((first, stencil::lagrange(s - first as f64, 0, points)));
            }
        }
        let strides = grid.strides();
        let mut entries = Vec::new();
        let total: usize = axes.iter().map(|(_, w)| w.len()).product();
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let offs: Vec<i64> = (0..n).map(|k| axes[k].0 + idx[k] as i64).collect();
            let flat: i64 = (0..n).map(|k| offs[k] * strides[k] as i64).sum();
            let w: f64 = (0..n).map(|k| axes[k].1[idx[k]]).product();
            entries.push((offs, flat, w));
            for k in (0..n).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].1.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        let lo = axes.iter().map(|(f, _)| *f).collect();
        let hi = axes.iter().map(|(f, w)| f + w.len() as i64 - 1).collect();
        Self {
            cells,
            axes,
            entries,
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Weights along one axis.
    pub fn axis_weights(&self, axis: usize) -> &[f64] {
        &self.axes[axis].1
    }
}

impl GridFunction {
    /// Value at node `idx` displaced by the stencil's shift, with the
    /// zero-padding rule of [`GridFunction::interpolate`]. The flag marks
    /// targets outside the grid box.
    pub fn shifted_value(&self, idx: &[usize], flat: usize, st: &ShiftStencil) -> (Complex64, bool) {
        let n = idx.len();
        let mut excursion = false;
        let mut all_inside = true;
        for k in 0..n {
            let dim = self.grid.dims[k] as i64;
            let target = idx[k] as f64 + st.cells[k];
            if target < 0.0 || target > (dim - 1) as f64 {
                excursion = true;
                if target < -1.0 || target > dim as f64 {
                    return (Complex64::new(0.0, 0.0), true);
                }
            }
            let i = idx[k] as i64;
            if i + st.lo[k] < 0 || i + st.hi[k] >= dim {
                all_inside = false;
            }
        }
        let base = flat as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        if all_inside {
            for (_, off, w) in &st.entries {
                acc += self.values[(base + off) as usize] * w;
            }
        } else {
            'e: for (offs, off, w) in &st.entries {
                for k in 0..n {
                    let j = idx[k] as i64 + offs[k];
                    if j < 0 || j >= self.grid.dims[k] as i64 {
                        continue 'e;
                    }
                }
                acc += self.values[(base + off) as usize] * w;
            }
        }
        (acc, excursion)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn rejects_even_dims() {
        assert!(Grid::cube(2, 64, 1.0).is_err());
        assert!(Grid::cube(2, 65, 1.0).is_ok());
    }

    #[test]
    fn ravel_roundtrip_and_mirror() {
        let g = Grid::new(vec![5, 7, 3], vec![-1.0, -2.0, -3.0], vec![1.0, 2.0, 3.0]).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.ravel(&g.unravel(flat)), flat);
            let p = g.point(flat);
            let q = g.point(g.mirror(flat));
            for (a, b) in p.iter().zip(&q) {
                assert!((a + b).abs() < 1e-14);
            }
        }
        assert_eq!(g.point(g.origin_index().unwrap()), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn trapezoid_integrates_gaussian() {
        let g = Grid::cube(2, 81, 8.0).unwrap();
        let f = GridFunction::from_fn(g, GridKind::Generic, |x| {
            c((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp())
        });
        let i = f.integral().re;
        assert!((i - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_for_low_degree() {
        let g = Grid::cube(2, 21, 2.0).unwrap();
        let poly = |x: &[f64]| c(1.0 + x[0] - x[1] * x[1] + 0.3 * x[0] * x[0] * x[1]);
        let f = GridFunction::from_fn(g, GridKind::Generic, poly);
        let it = Interpolation::cubic(Boundary::ZeroPad);
        for p in [[0.13, -0.77], [1.01, 0.5], [-0.4, 0.0]] {
            let (v, ex) = f.interpolate(&p, &it);
            assert!(!ex);
            assert!((v - poly(&p)).norm() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn derivative_accuracy() {
        let g = Grid::cube(1, 101, 5.0).unwrap();
        let f = GridFunction::from_fn(g.clone(), GridKind::Generic, |x| c(x[0].sin()));
        let d = f.derivative(0, 1, 8);
        for i in 10..91 {
            let x = g.coord(0, i);
            assert!((d[i].re - x.cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_stencil_matches_pointwise_interpolation() {
        let grid = Grid::cube(2, 21, 3.0).unwrap();
        let f = GridFunction::from_fn(grid.clone(), GridKind::Generic, |x| {
            Complex64::new((-(x[0] * x[0] + 0.5 * x[1] * x[1])).exp(), x[0] * 0.1)
        });
        let interp = Interpolation::with_points(6, Boundary::ZeroPad);
        for shift in [[0.37, 0.0], [-1.21, 0.9], [0.3, -2.85], [4.0, 0.0]] {
            let st = ShiftStencil::new(&grid, &shift, 6);
            for flat in 0..grid.len() {
                let idx = grid.unravel(flat);
                let x: Vec<f64> = grid.point(flat).iter().zip(&shift).map(|(a, b)| a + b).collect();
                let (a, ea) = f.shifted_value(&idx, flat, &st);
                let (b, eb) = f.interpolate(&x, &interp);
                assert!((a - b).norm() < 1e-13, "{shift:?} {flat}");
                assert_eq!(ea, eb);
            }
        }
    }
}
