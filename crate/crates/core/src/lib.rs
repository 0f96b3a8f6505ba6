//! Energy-preserving adaptive variational integrators (EpAVI), monitor-function
//! adaptive variational integrators (AVI), a Dormand-Prince reference solver and
//! backward-error-analysis checks for 1-DOF modified equations.
//!
//! All numerics are generic over [`scalar::Real`], so the same code runs in
//! `f64` and in double-double arithmetic.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bea;
pub mod config;
pub mod diagnostics;
pub mod experiment;
pub mod integrators;
pub mod linalg;
pub mod models;
pub mod scalar;
pub mod solvers;

pub use integrators::{StepRecord, Trajectory};
pub use models::{ExtendedState, LagrangianModel, ModelError};
pub use scalar::{with_precision, DoubleDouble, PrecisionContext, Real};
pub use solvers::{SolveReport, SolverConfig, SolverError};
