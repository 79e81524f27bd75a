//! Convergence diagnostics of the invariant-state series.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::rhs::Rhs;
use crate::error::{Result, WeylError};
use crate::invariant::series::SeriesState;
use crate::phase::grid::GridFunction;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub order: usize,
    /// `‖Φ_k‖₂` for `k = 0..=order`.
    pub qcf_norms: Vec<f64>,
    pub qpdf_norms: Vec<f64>,
    /// `‖Φ_k‖ / ‖Φ_{k−1}‖` for `k ≥ 1`; zero when the denominator vanishes.
    pub qcf_ratios: Vec<f64>,
    pub qpdf_ratios: Vec<f64>,
    /// `max_k |Φ_k(0)|` and `max_k |∫℧_k|` over `k ≥ 1`.
    pub max_origin_value: f64,
    pub max_term_mass: f64,
    /// Volume fraction of the grid where the partial sum `Σ_{j≤K} ℧_j` is
    /// negative, for `K = 0..=order`.
    pub negativity_fraction: Vec<f64>,
    pub negative_volume: Vec<f64>,
    /// Interior sup of the full right-hand side on each partial sum.
    pub qcf_stationarity: Vec<f64>,
    pub qpdf_stationarity: Vec<f64>,
    pub max_hermitian_residual: f64,
    pub max_imag_qpdf: f64,
}

fn ratios(norms: &[f64]) -> Vec<f64> {
    norms
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect()
}

fn interior_sup(f: &GridFunction, values: &[Complex64], margin: usize) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(flat, _)| f.grid.interior(*flat, margin))
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max)
}

pub fn invariant_summary(series: &SeriesState) -> Result<InvariantSummary> {
    if series.qcf_terms.len() < 2 && series.qpdf_terms.len() < 2 {
        return Err(WeylError::InvalidInput("the summary needs at least two series terms".into()));
    }
    let cfg = &series.config;
    let margin_of = |f: &GridFunction| {
        cfg.residual_margin
            .unwrap_or_else(|| f.grid.dims.iter().copied().min().unwrap_or(0) / 8)
    };
    let mut s = InvariantSummary {
        order: series.order(),
        qcf_norms: series.qcf_terms.iter().map(|f| f.l2_norm()).collect(),
        qpdf_norms: series.qpdf_terms.iter().map(|f| f.l2_norm()).collect(),
        ..Default::default()
    };
    s.qcf_ratios = ratios(&s.qcf_norms);
    s.qpdf_ratios = ratios(&s.qpdf_norms);
    s.max_origin_value = series.qcf_terms.iter().skip(1).filter_map(|f| f.origin_value()).map(|v| v.norm()).fold(0.0, f64::max);
    s.max_term_mass = series.qpdf_terms.iter().skip(1).map(|f| f.integral().norm()).fold(0.0, f64::max);

    if !series.qcf_terms.is_empty() {
        let rhs = Rhs::qcf_linear_coupling(&series.spec, &series.sym, cfg.rhs)?;
        for k in 0..series.qcf_terms.len() {
            let sum = series.qcf_partial_sum(k).expect("non-empty");
            s.max_hermitian_residual = s.max_hermitian_residual.max(sum.hermitian_residual());
            let r = rhs.eval(&sum)?;
            s.qcf_stationarity.push(interior_sup(&sum, &r, margin_of(&sum)));
        }
    }
    if !series.qpdf_terms.is_empty() {
        let rhs = Rhs::qpdf_linear_coupling(&series.spec, &series.sym, cfg.rhs)?;
        for k in 0..series.qpdf_terms.len() {
            let sum = series.qpdf_partial_sum(k).expect("non-empty");
            s.max_imag_qpdf = s.max_imag_qpdf.max(sum.max_imag());
            let peak = sum.values.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
            let mut neg = 0.0;
            let mut total = 0.0;
            for (flat, v) in sum.values.iter().enumerate() {
                let w = sum.grid.trapezoid_weight(flat);
                total += w;
                if v.re < -1e-12 * peak {
                    neg += w;
                }
            }
            s.negative_volume.push(neg);
            s.negativity_fraction.push(if total > 0.0 { neg / total } else { 0.0 });
            let r = rhs.eval(&sum)?;
            s.qpdf_stationarity.push(interior_sup(&sum, &r, margin_of(&sum)));
        }
    }
    Ok(s)
}
