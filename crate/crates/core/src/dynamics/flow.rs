//! Exact linear QCF flow by the method of characteristics.

use std::sync::atomic::{AtomicUsize, Ordering};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dynamics::moments::flow_parameters;
use crate::kernels::LinearDynamics;
use crate::linalg::{self, Mat};
use crate::phase::grid::{GridFunction, Interpolation};

/// Characteristic data of the linear flow over a fixed time step.
#[derive(Debug, Clone)]
pub struct LinearPropagator {
    pub t: f64,
    /// `e^{tAᵀ}`.
    pub transport: Mat,
    pub mu: Vec<f64>,
    pub sigma: Mat,
}

impl LinearPropagator {
    pub fn new(dyn_: &LinearDynamics, t: f64) -> Self {
        let p = flow_parameters(dyn_, t);
        Self {
            t,
            transport: linalg::expm(&(dyn_.a.transpose() * t)),
            mu: p.mu.as_slice().to_vec(),
            sigma: p.sigma,
        }
    }

    /// `Φ(t,u) = Φ(0, e^{tAᵀ}u) exp(iμ(t)ᵀu − ½uᵀΣ(t)u)`; returns the number of
    /// characteristic feet that left the grid box.
    pub fn apply(&self, phi0: &GridFunction, interp: &Interpolation) -> (GridFunction, usize) {
        let grid = &phi0.grid;
        let excursions = AtomicUsize::new(0);
        let values: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let u = grid.point(flat);
                let foot = linalg::mat_vec(&self.transport, &u);
                let (v, out) = phi0.interpolate(&foot, interp);
                if out {
                    excursions.fetch_add(1, Ordering::Relaxed);
                }
                let phase = linalg::dot(&self.mu, &u);
                let damp = (-0.5 * linalg::quad_form(&self.sigma, &u)).exp();
                v * Complex64::from_polar(damp, phase)
            })
            .collect();
        let out = phi0.with_values(values).at_time(phi0.time + self.t);
        (out, excursions.into_inner())
    }
}

/// One-shot form of [`LinearPropagator::apply`].
pub fn exact_linear_qcf_flow(
    phi0: &GridFunction,
    dyn_: &LinearDynamics,
    t: f64,
    interp: &Interpolation,
) -> GridFunction {
    if t == 0.0 {
        return phi0.clone();
    }
    let (out, excursions) = LinearPropagator::new(dyn_, t).apply(phi0, interp);
    if excursions > 0 {
        log::debug!("linear flow: {excursions} characteristic feet outside the grid");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::moments::propagate_gaussian;
    use crate::kernels::{compute_linear_dynamics, EnergySpec};
    use crate::linalg::Vector;
    use crate::phase::grid::{Boundary, Grid, GridKind};
    use crate::phase::gaussian::GaussianState;
    use crate::phase::symplectic::SymplecticData;

    fn system() -> LinearDynamics {
        let sym = SymplecticData::standard(2, 2).unwrap();
        let spec = EnergySpec::new(
            Vector::from_vec(vec![0.2, -0.1]),
            Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]),
            Mat::identity(2, 2) * 0.5f64.sqrt(),
            vec![],
        );
        compute_linear_dynamics(&spec, &sym).unwrap()
    }

    #[test]
    fn gaussian_parameters_push_through() {
        let d = system();
        let grid = Grid::cube(2, 129, 8.0).unwrap();
        let init = GaussianState::new(
            Vector::from_vec(vec![0.3, -0.5]),
            Mat::from_row_slice(2, 2, &[1.2, 0.3, 0.3, 0.9]),
        )
        .unwrap();
        let phi0 = init.sample_qcf(&grid);
        let interp = Interpolation::with_points(8, Boundary::ZeroPad);
        for t in [0.25, 1.0] {
            let out = exact_linear_qcf_flow(&phi0, &d, t, &interp);
            let exact = propagate_gaussian(&d, &init, t).sample_qcf(&grid);
            assert!(out.max_abs_diff(&exact) < 1e-7, "t = {t}: {}", out.max_abs_diff(&exact));
            assert_eq!(out.origin_value().unwrap(), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let d = system();
        let grid = Grid::cube(2, 17, 4.0).unwrap();
        let phi0 = GaussianState::centered(Mat::identity(2, 2)).unwrap().sample_qcf(&grid);
        let out = exact_linear_qcf_flow(&phi0, &d, 0.0, &Interpolation::default());
        assert_eq!(out, phi0);
        assert_eq!(out.kind, GridKind::Qcf);
    }
}
