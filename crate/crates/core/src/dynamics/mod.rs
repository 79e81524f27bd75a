//! Time evolution: exact linear flows, grid right-hand sides for the QCF and
//! QPDF equations, time integrators and balance diagnostics.

pub mod diagnostics;
pub mod evolve;
pub mod flow;
pub mod moments;
pub mod rhs;

pub use diagnostics::{dissipation_balance, mean_dynamics_check, mean_drift, qcf_mean, weighted_norm, DissipationReport, MeanDynamicsReport};
pub use evolve::{evolve, stability_bound, EvolutionConfig, InvariantSample, Scheme, Trajectory, ABORT_FACTOR};
pub use flow::{exact_linear_qcf_flow, LinearPropagator};
pub use moments::{
    flow_parameters, gramian, integrate_moment_odes, mean_integral, propagate_gaussian, steady_state, SteadyState,
};
pub use rhs::{
    fokker_planck, qcf_linear_part, qcf_rhs_general, qcf_rhs_linear_coupling, qpdf_rhs_linear_coupling, Rhs,
    RhsKind, RhsOptions,
};
