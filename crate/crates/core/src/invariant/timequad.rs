//! Quadrature over `t ∈ [0, ∞)` for semigroup integrals `∫₀^∞ e^{t𝔄} f dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WeylError};
use crate::quadrature::gauss_legendre;

/// Gauss–Legendre panels: one on `[0, t_min]`, then panels doubling in
/// length up to `max_panel`, then uniform panels until the integrand has
/// decayed below `tol` relative to its peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeQuadrature {
    pub t_min: f64,
    pub max_panel: f64,
    pub nodes_per_panel: usize,
    pub t_max: f64,
    pub tol: f64,
}

impl Default for TimeQuadrature {
    fn default() -> Self {
        Self {
            t_min: 1e-4,
            max_panel: 1.0,
            nodes_per_panel: 8,
            t_max: 1e3,
            tol: 1e-12,
        }
    }
}

impl TimeQuadrature {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.max_panel >= self.t_min && self.t_max > self.t_min && self.tol > 0.0)
            || self.nodes_per_panel == 0
        {
            return Err(WeylError::InvalidInput("invalid time-quadrature parameters".into()));
        }
        Ok(())
    }

    /// Panel `k` as `(a, b)`.
    pub fn panel(&self, k: usize) -> (f64, f64) {
        if k == 0 {
            return (0.0, self.t_min);
        }
        let mut a = self.t_min;
        let mut len = self.t_min;
        for _ in 1..k {
            a += len;
            len = (2.0 * len).min(self.max_panel);
        }
        (a, a + len)
    }

    /// Calls `eval(t, w)` for every node until the integrand has decayed.
    /// `eval` accumulates `w·f(t)` itself and returns `sup|f(t)|`. Returns
    /// the truncation time.
    pub fn run<F>(&self, mut eval: F) -> Result<f64>
    where
        F: FnMut(f64, f64) -> Result<f64>,
    {
        self.validate()?;
        let (x, w) = gauss_legendre(self.nodes_per_panel);
        let mut peak: f64 = 0.0;
        let mut history: Vec<(f64, f64)> = Vec::new();
        let mut k = 0;
        loop {
            let (a, b) = self.panel(k);
            let mut panel_max: f64 = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                let t = 0.5 * (a + b) + 0.5 * (b - a) * xi;
                let m = eval(t, 0.5 * (b - a) * wi)?;
                panel_max = panel_max.max(m);
            }
            peak = peak.max(panel_max);
            history.push((b, panel_max));
            if panel_max <= self.tol * peak || peak == 0.0 {
                return Ok(b);
            }
            if b >= self.t_max {
                let rate = decay_rate(&history);
                return Err(WeylError::SlowDecay(format!(
                    "integrand still at {:.3e} of its peak at t = {b:.1}; estimated decay rate {rate:.3e}",
                    panel_max / peak
                )));
            }
            k += 1;
        }
    }
}

fn decay_rate(history: &[(f64, f64)]) -> f64 {
    if history.len() < 3 {
        return f64::NAN;
    }
    let (t1, m1) = history[history.len() / 2];
    let (t2, m2) = history[history.len() - 1];
    if m1 <= 0.0 || m2 <= 0.0 {
        return f64::NAN;
    }
    (m1 / m2).ln() / (t2 - t1)
}
