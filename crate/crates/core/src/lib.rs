//! Monitored variational quantum circuits.
//!
//! This crate simulates the XXZ Hamiltonian variational ansatz and the
//! hardware-efficient ansatz with randomly placed mid-circuit projective
//! measurements, and provides the analysis needed to study the resulting
//! volume-law to area-law entanglement transition:
//!
//! * [`sim`]: dense statevector simulation, seeded trajectories and branch replay;
//! * [`entropy`]: von Neumann entropies and two-site mutual information;
//! * [`gradient`]: parameter-shift gradients through projective measurements;
//! * [`scaling`]: finite-size-scaling collapse, bootstrap and extrapolation;
//! * [`experiment`]: reproducible ensemble sweeps with resumable output.
//!
//! ```
//! use mipt::sim::{build_xxz_hva, run_trajectory};
//! use mipt::entropy::half_chain_entropy;
//!
//! let circuit = build_xxz_hva(6, 4, &[0.3; 16])?;
//! let traj = run_trajectory(&circuit, 0.2, 42)?;
//! let s = half_chain_entropy(&traj.final_state)?;
//! assert!(s >= 0.0 && s <= 3.0 * std::f64::consts::LN_2 + 1e-9);
//! # Ok::<(), mipt::Error>(())
//! ```

// Guards such as `!(nu > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entropy;
mod error;
pub mod experiment;
pub mod gradient;
pub mod observable;
pub mod oracle;
pub mod scaling;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book;
