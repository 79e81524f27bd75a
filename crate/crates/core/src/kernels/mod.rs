//! Closed-form kernels: linear dynamics, the auxiliary functions `K`, `M`,
//! `L`, Weyl symbols, the evolution kernels `V` and `Π`, and the Gaussian
//! image of the Moyal operator.

pub mod auxiliary;
pub mod energy;
pub mod moyal;
pub mod symbols;
pub mod table;

pub use auxiliary::{kernel_k, kernel_l, kernel_m, sinc, CMat};
pub use energy::{compute_linear_dynamics, EnergySpec, GaussianPotentialTerm, LinearDynamics, PreparedTerm};
pub use moyal::{moyal_image_of_gaussian, MoyalImage};
pub use symbols::{kernel_pi, kernel_v, kernel_v_on_support, symbol_f, symbol_f_on_support, symbol_g, CVector};
pub use table::KernelTable;
