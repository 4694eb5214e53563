//! Numerical laboratory for the coupled degenerate diffusion system
//!
//! ```text
//! (u^i)_t = ∇·(m |u|^{m-1} ∇u^i),   i = 1..k,   |u| = sqrt(sum_i (u^i)^2),   m > 1
//! ```
//!
//! in one or two space dimensions: an explicit finite-volume solver, a solver in
//! self-similar variables with entropy tracking, closed-form Barenblatt and
//! travelling-wave oracles, and diagnostics for support, mass, proportionality,
//! stabilization and Harnack-type bounds.

// `!(x > 0.0)` is the intended spelling: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barenblatt;
pub mod diagnostics;
pub mod grid;
pub mod io;
pub mod numeric;
pub mod refinement;
pub mod report;
pub mod selfsim;
pub mod solver;
pub mod state;
pub mod travelling;

pub use barenblatt::{BarenblattError, BarenblattProfile};
pub use grid::{CellSet, Grid, GridError};
pub use report::{DiagnosticsReport, SampleRecord};
pub use solver::{run, run_with, Observer, RunOptions, RunOutput, SolverConfig, SolverError};
pub use state::{mass, norm_field, support, support_distance, ScalarField, SpeciesState, StateError};
