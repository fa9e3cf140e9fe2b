//! Numerical laboratory for separation cut-off of Brownian motion on
//! rotationally symmetric manifolds `[0, L] x S^{n-1}` with metric
//! `dr^2 + f(r)^2 dtheta^2`.

// Negated comparisons are used deliberately so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod asymptotics;
pub mod error;
pub mod green;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod special;
pub mod stats;
pub mod tables;
pub mod verify;
pub mod weights;

pub use error::{LabError, Result};
pub use tables::{build_default, build_grid, build_table, GradedGrid, IntegralTable, TableCache};
pub use weights::{make_power_curvature, make_sphere, WeightFamily, WeightFn};
