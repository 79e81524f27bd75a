//! Invariant states as perturbation series around the Gaussian invariant
//! state of the linear flow, inverting the linear generators by time
//! integrals of their semigroups.

pub mod greens;
pub mod series;
pub mod summary;
pub mod timequad;

pub use greens::{greens_kernel, greens_kernel_many, qpdf_from_greens, qpdf_from_greens_grid};
pub use series::{
    apply_fb, gaussian_invariant, invariant_series, series_step_qcf, series_step_qpdf, series_step_qpdf_gaussian,
    GaussianInvariant, SeriesConfig, SeriesState, SeriesTerm,
};
pub use summary::{invariant_summary, InvariantSummary};
pub use timequad::TimeQuadrature;
