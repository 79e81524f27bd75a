//! Mixed moments of the system variables read off a sampled QCF.

use num_complex::Complex64;

use crate::error::{Result, WeylError};
use crate::phase::grid::{GridFunction, GridKind};
use crate::phase::psi::MultiIndex;
use crate::phase::symplectic::TildeTheta;
use crate::stencil;

pub const MAX_MOMENT_ORDER: usize = 4;
pub const DEFAULT_ACCURACY: usize = 4;
/// Relative disagreement between two stencil accuracies beyond which the
/// grid is declared too coarse.
pub const COARSE_TOL: f64 = 1e-2;

fn moment_with(
    phi: &GridFunction,
    alpha: &MultiIndex,
    tt: &TildeTheta,
    accuracy: usize,
) -> Result<Complex64> {
    let grid = &phi.grid;
    let n = grid.ndim();
    let origin = grid
        .origin_index()
        .ok_or_else(|| WeylError::InvalidInput("QCF grid must contain the origin".into()))?;
    let centre = grid.unravel(origin);
    let mut axes = Vec::new();
    for (k, &a) in alpha.0.iter().enumerate() {
        if a > 0 {
            let (half, w) = stencil::central(a as usize, accuracy);
            if half > centre[k] {
                return Err(WeylError::GridTooCoarse(format!(
                    "axis {k}: stencil of half-width {half} does not fit {} points",
                    grid.dims[k]
                )));
            }
            axes.push((k, half, w, grid.spacing(k).powi(a as i32)));
        }
    }
    let mut total = Complex64::new(0.0, 0.0);
    let mut pos = vec![0usize; axes.len()];
    let count: usize = axes.iter().map(|(_, h, _, _)| 2 * h + 1).product();
    for _ in 0..count {
        let mut idx = centre.clone();
        let mut w = 1.0;
        for (slot, (k, half, wk, _)) in axes.iter().enumerate() {
            idx[*k] = centre[*k] + pos[slot] - half;
            w *= wk[pos[slot]];
        }
        if w != 0.0 {
            let flat = grid.ravel(&idx);
            let u: Vec<f64> = (0..n).map(|k| grid.coord(k, idx[k])).collect();
            let g = phi.values[flat] * Complex64::from_polar(1.0, -0.5 * tt.quad(&u));
            total += g * w;
        }
        for slot in (0..axes.len()).rev() {
            pos[slot] += 1;
            if pos[slot] < 2 * axes[slot].1 + 1 {
                break;
            }
            pos[slot] = 0;
        }
    }
    let scale: f64 = axes.iter().map(|(_, _, _, h)| h).product();
    let order = alpha.order() as i32;
    Ok(total / scale * Complex64::new(0.0, -1.0).powi(order))
}

/// `(−i∂_u)^α [Φ(u) exp(−½ i uᵀθ̃u)]` at `u = 0` by central differences of
/// formal accuracy `accuracy`. A second evaluation at accuracy − 2 guards
/// against grids too coarse for the requested order.
pub fn moments_from_qcf(
    phi: &GridFunction,
    alpha: &MultiIndex,
    tt: &TildeTheta,
    accuracy: usize,
) -> Result<Complex64> {
    if phi.kind != GridKind::Qcf {
        return Err(WeylError::InvalidInput("moments need a QCF grid".into()));
    }
    let order = alpha.order();
    if order > MAX_MOMENT_ORDER {
        return Err(WeylError::OrderOverflow {
            order,
            limit: MAX_MOMENT_ORDER,
        });
    }
    if alpha.len() != phi.grid.ndim() {
        return Err(WeylError::Dimension("multi-index length differs from grid rank".into()));
    }
    if order == 0 {
        return Ok(phi.origin_value().unwrap_or_default());
    }
    let v = moment_with(phi, alpha, tt, accuracy)?;
    if accuracy >= 4 {
        let coarse = moment_with(phi, alpha, tt, accuracy - 2)?;
        if (v - coarse).norm() > COARSE_TOL * v.norm().max(1.0) {
            return Err(WeylError::GridTooCoarse(format!(
                "moment {:?} changes by {:.2e} between stencil accuracies {} and {}",
                alpha.0,
                (v - coarse).norm(),
                accuracy - 2,
                accuracy
            )));
        }
    }
    Ok(v)
}

/// Mean vector and real covariance extracted from a QCF grid.
pub fn mean_and_covariance(
    phi: &GridFunction,
    tt: &TildeTheta,
    accuracy: usize,
) -> Result<(Vec<f64>, crate::linalg::Mat)> {
    let n = phi.grid.ndim();
    let mut mu = vec![0.0; n];
    for (j, m) in mu.iter_mut().enumerate() {
        *m = moments_from_qcf(phi, &MultiIndex::unit(n, j), tt, accuracy)?.re;
    }
    let mut sigma = crate::linalg::Mat::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let mut a = MultiIndex::zero(n);
            a.0[j] += 1;
            a.0[k] += 1;
            let second = moments_from_qcf(phi, &a, tt, accuracy)?.re;
            sigma[(j, k)] = second - mu[j] * mu[k];
            sigma[(k, j)] = sigma[(j, k)];
        }
    }
    Ok((mu, sigma))
}
