//! Non-Gaussianity of QPDFs: χ²-divergence from Gaussian densities, the
//! optimal Gaussian fit, its dissipation relation and the weighted
//! Dirichlet inequality behind it.

pub mod chi2;
pub mod dirichlet;
pub mod dissipation;
pub mod fit;

pub use chi2::{chi2_divergence, chi2_gradients, grid_moments, reference_wide_enough, Chi2, RatioMoments};
pub use dirichlet::{dirichlet_check, DirichletReport};
pub use dissipation::{dissipation_chi2, Chi2DissipationReport, RefPath};
pub use fit::{fit_gaussian, FitOptions, FitResult};
