//! Dense statevector simulation of monitored variational circuits.
//!
//! Two circuit families are provided ([`build_xxz_hva`], [`build_hea`]).
//! A trajectory interleaves the unitary layers with stochastic single-qubit
//! Z-basis measurements; every random choice is drawn from a generator seeded
//! with a single `u64`, so trajectories replay exactly.

mod circuit;
mod gate;
mod seed;
mod state;
mod trajectory;

pub use circuit::{
    build_hea, build_hea_with, build_xxz_hva, CircuitOptions, CircuitSpec, Family, GateRef,
};
pub use gate::{GateKind, GateOp, Mat2, Mat4};
pub use seed::derive_seed;
pub use state::{Measured, StateVector, MIN_BRANCH_PROBABILITY};
pub use trajectory::{
    replay_branch, run_trajectory, run_trajectory_rng, run_trajectory_with, sample_sites,
    trajectory_rng, MeasurementRecord, MeasurementSite, TrajectoryResult,
};
pub(crate) use trajectory::check_sites;

/// Samples `count` angles uniformly from `[0, 2 pi)`.
pub fn uniform_params<R: rand::Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    (0..count)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect()
}
