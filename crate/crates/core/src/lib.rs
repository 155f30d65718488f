//! Classical communication cost of quantum steering.
//!
//! The crate builds assemblages from bipartite states and measurements,
//! decides whether they admit a local-hidden-state (LHS) model, computes the
//! LHS robustness `ν` with a small ADMM semidefinite-programming solver, and
//! turns it into lower bounds `t ≥ log₂(ν + 1)` on the number of bits Alice
//! must send Bob to fake steering. Closed-form bounds for isotropic states and
//! for approximate simulation, and a simulator for finite-message cheating
//! protocols, complete the picture.
//!
//! Module map:
//!
//! - [`linalg`]: dense complex matrices, Jacobi eigensolver, trace distance
//! - [`quantum`]: states, measurements, assemblages
//! - [`sdp`]: ADMM solver for PSD-block programs
//! - [`steering`]: LHS membership, robustness primal/dual, `σ*` construction
//! - [`bounds`]: closed-form communication bounds
//! - [`protocol`]: sphere nets and finite-message protocol simulation
//! - [`cli`]: the `steercost` command-line front-end

#![forbid(unsafe_code)]

pub mod bounds;
pub mod cli;
pub mod linalg;
pub mod protocol;
pub mod quantum;
pub mod sdp;
pub mod steering;

pub use linalg::{CMat, C64};
pub use quantum::{Assemblage, DensityMatrix, MeasurementSet};
