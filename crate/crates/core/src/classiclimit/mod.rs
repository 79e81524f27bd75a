//! Classical limit `ħ → 0`: drift and dispersion of the limit SDE, Monte
//! Carlo moments, canonical-flow identities and the `ħ` sweep.

pub mod canonical;
pub mod sde;
pub mod spec;
pub mod sweep;

pub use canonical::{canonical_identity_check, phi, random_canonical_samples, CanonicalReport, CanonicalSample};
pub use sde::{simulate_sde, InitialCondition, MomentTrajectory, SdeConfig};
pub use spec::{classical_drift_dispersion, ClassicalSpec, DriftField};
pub use sweep::{classical_moments, hbar_sweep, quantum_mean, HbarSweepConfig, HbarSweepReport};
