//! Discrete Fourier pair between QCF and QPDF grids:
//! `℧(x) = (2π)^{-n} ∫ Φ(u) e^{-iuᵀx} du`, `Φ(u) = ∫ ℧(x) e^{iuᵀx} dx`.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Result, WeylError};
use crate::phase::grid::{Grid, GridFunction, GridKind};

/// Boundary magnitude above which a transform is refused outright.
pub const TAIL_REJECT: f64 = 1e-3;

#[derive(Debug, Clone, Default)]
pub struct FourierReport {
    pub boundary_max: f64,
    /// Largest imaginary part of the QPDF output (zero for the inverse).
    pub imag_residual: f64,
    pub warnings: Vec<String>,
}

/// Grid dual to `grid` under the centred DFT: spacing `2π / (N h)` per axis.
pub fn dual_grid(grid: &Grid) -> Result<Grid> {
    if !grid.is_origin_centered() {
        return Err(WeylError::InvalidInput("FFT grids must be centred on the origin".into()));
    }
    let half: Vec<f64> = (0..grid.ndim())
        .map(|k| {
            let n = grid.dims[k];
            let dx = 2.0 * std::f64::consts::PI / (n as f64 * grid.spacing(k));
            dx * ((n - 1) / 2) as f64
        })
        .collect();
    Grid::centered(grid.dims.clone(), half)
}

/// In-place centred DFT along every axis, `X_k = Σ_j x_j e^{∓2πi jk/N}` with
/// `j, k ∈ [−M, M]`.
fn centred_dft(values: &mut [Complex64], grid: &Grid, direction: FftDirection) {
    let strides = grid.strides();
    let mut planner = FftPlanner::<f64>::new();
    for axis in 0..grid.ndim() {
        let n = grid.dims[axis];
        let m = (n - 1) / 2;
        let fft = planner.plan_fft(n, direction);
        let stride = strides[axis];
        let lines: Vec<usize> = (0..values.len())
            .filter(|&f| (f / stride) % n == 0)
            .collect();
        let updates: Vec<(usize, Vec<Complex64>)> = lines
            .par_iter()
            .map(|&start| {
                let mut buf: Vec<Complex64> =
                    (0..n).map(|q| values[start + ((q + m) % n) * stride]).collect();
                fft.process(&mut buf);
                let out = (0..n).map(|p| buf[(p + m + 1) % n]).collect();
                (start, out)
            })
            .collect();
        for (start, out) in updates {
            for (p, v) in out.into_iter().enumerate() {
                values[start + p * stride] = v;
            }
        }
    }
}

/// QCF → QPDF. The tail is checked first: boundary values above `tol_tail`
/// go to the warning channel, above [`TAIL_REJECT`] the input is rejected.
pub fn qcf_to_qpdf(phi: &GridFunction, tol_tail: f64) -> Result<(GridFunction, FourierReport)> {
    let mut report = FourierReport {
        boundary_max: phi.boundary_max(),
        ..Default::default()
    };
    if report.boundary_max > TAIL_REJECT {
        return Err(WeylError::Tail(format!(
            "QCF boundary magnitude {:.3e} exceeds {TAIL_REJECT:.0e}; enlarge the u-grid",
            report.boundary_max
        )));
    }
    if report.boundary_max > tol_tail {
        let msg = format!(
            "QCF boundary magnitude {:.3e} above tol_tail {tol_tail:.0e}: truncation bias",
            report.boundary_max
        );
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    let out_grid = dual_grid(&phi.grid)?;
    let mut values = phi.values.clone();
    centred_dft(&mut values, &phi.grid, FftDirection::Forward);
    let scale = phi.grid.cell_volume() / (2.0 * std::f64::consts::PI).powi(phi.grid.ndim() as i32);
    for v in values.iter_mut() {
        *v *= scale;
    }
    let out = GridFunction {
        grid: out_grid,
        values,
        kind: GridKind::Qpdf,
        time: phi.time,
    };
    report.imag_residual = out.max_imag();
    Ok((out, report))
}

/// QPDF → QCF.
pub fn qpdf_to_qcf(mho: &GridFunction, tol_tail: f64) -> Result<(GridFunction, FourierReport)> {
    let mut report = FourierReport {
        boundary_max: mho.boundary_max(),
        ..Default::default()
    };
    if report.boundary_max > TAIL_REJECT {
        return Err(WeylError::Tail(format!(
            "QPDF boundary magnitude {:.3e} exceeds {TAIL_REJECT:.0e}; enlarge the x-grid",
            report.boundary_max
        )));
    }
    if report.boundary_max > tol_tail {
        let msg = format!(
            "QPDF boundary magnitude {:.3e} above tol_tail {tol_tail:.0e}: truncation bias",
            report.boundary_max
        );
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    let out_grid = dual_grid(&mho.grid)?;
    let mut values = mho.values.clone();
    centred_dft(&mut values, &mho.grid, FftDirection::Inverse);
    let scale = mho.grid.cell_volume();
    for v in values.iter_mut() {
        *v *= scale;
    }
    let out = GridFunction {
        grid: out_grid,
        values,
        kind: GridKind::Qcf,
        time: mho.time,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Mat, Vector};
    use crate::phase::gaussian::GaussianState;

    #[test]
    fn gaussian_pair() {
        let g = GaussianState::centered(Mat::identity(2, 2)).unwrap();
        let grid = Grid::cube(2, 65, 12.0).unwrap();
        let (mho, rep) = qcf_to_qpdf(&g.sample_qcf(&grid), 1e-8).unwrap();
        assert!(rep.warnings.is_empty());
        assert!(rep.imag_residual < 1e-12);
        let exact = g.sample_qpdf(&mho.grid).unwrap();
        assert!(mho.max_abs_diff(&exact) < 1e-8);
        assert!((mho.integral().re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shifted_gaussian_pair_and_roundtrip() {
        let g = GaussianState::new(
            Vector::from_vec(vec![0.5, -0.3]),
            Mat::from_row_slice(2, 2, &[0.7, 0.2, 0.2, 1.1]),
        )
        .unwrap();
        let xgrid = Grid::cube(2, 63, 9.0).unwrap();
        let mho = g.sample_qpdf(&xgrid).unwrap();
        let (phi, _) = qpdf_to_qcf(&mho, 1e-8).unwrap();
        let exact = g.sample_qcf(&phi.grid);
        assert!(phi.max_abs_diff(&exact) < 1e-8);
        assert!(phi.hermitian_residual() < 1e-10);
        let (back, _) = qcf_to_qpdf(&phi, 1.0).unwrap();
        assert!(back.grid.matches(&xgrid));
        assert!(back.max_abs_diff(&mho) < 1e-12);
    }

    #[test]
    fn constant_qcf_is_rejected() {
        let grid = Grid::cube(2, 33, 5.0).unwrap();
        let one = GridFunction::from_fn(grid, GridKind::Qcf, |_| Complex64::new(1.0, 0.0));
        assert!(matches!(qcf_to_qpdf(&one, 1e-8), Err(WeylError::Tail(_))));
    }
}
