//! Simulate, train and discover: ground-truth simulation of two damped
//! oscillatory systems, neural ODE training through an unrolled RK4 solver,
//! and genetic-programming symbolic regression of the governing equations.

// Index loops mirror the math in the solvers; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod neural;
pub mod node;
pub mod ode;
pub mod symreg;
pub mod systems;
pub mod util;

pub use config::{ExperimentConfig, PRESET_NAMES};
pub use dataset::{Dataset, NoiseSpec, SamplingSpec, SimSpec};
pub use ode::{Trajectory, VectorField};
pub use systems::{BioParams, BioState, CartPoleParams, SystemSpec};
