//! Integrator families: energy-preserving adaptive (EpAVI), monitor-function
//! adaptive (AVI), fixed-step midpoint and a Dormand-Prince reference.

mod avi;
mod epavi;
mod midpoint;
mod monitor;
mod reference;

pub use avi::{avi_calibrate_delta_a, avi_run, avi_step, AviState};
pub use epavi::{epavi_first_energy, epavi_run, epavi_step, EnergyInit, EpaviOptions};
pub use midpoint::{
    discrete_lagrangian_midpoint, discrete_partials_midpoint, midpoint_fixed_run, midpoint_fixed_step, DiscretePartials,
};
pub use monitor::{monitor_arclength, monitor_kepler, MonitorFn};
pub use reference::{dopri5, reference_solve, DenseSolution, Dopri5Options};

use thiserror::Error;

use crate::models::{ExtendedState, ModelError};
use crate::solvers::SolverError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("non-monotone time: t_next = {next:e} is not after t = {prev:e}")]
    NonMonotoneTime { prev: f64, next: f64 },
    #[error("monitor function is not positive (value {0:e})")]
    MonitorDomain(f64),
    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("query time {t:e} outside the solution span [{start:e}, {end:e}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("step limit of {0} reached before the final time")]
    StepLimit(usize),
}

/// Per-step solver metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Physical step `t_{k+1} - t_k`.
    pub h: f64,
    pub residual: f64,
    pub newton_iters: usize,
    /// Fictitious step for monitor-function integrators.
    pub delta_a: Option<f64>,
    pub condition: f64,
    /// Whether the step needed the halved-guess retry.
    pub retried: bool,
}

/// Ordered states plus one record per step (`steps.len() + 1 == states.len()`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<ExtendedState<S>>,
    pub steps: Vec<StepRecord>,
}

impl<S: crate::scalar::Real> Trajectory<S> {
    pub fn new(state0: ExtendedState<S>) -> Self {
        Self {
            states: vec![state0],
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, state: ExtendedState<S>, record: StepRecord) {
        self.states.push(state);
        self.steps.push(record);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &ExtendedState<S> {
        self.states.last().expect("trajectory always has an initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t.as_f64()).collect()
    }

    pub fn time_strictly_increasing(&self) -> bool {
        self.states.windows(2).all(|w| w[1].t > w[0].t)
    }
}

/// A run stopped by a step failure, with everything computed up to that point.
#[derive(Debug, Clone, Error)]
#[error("run aborted at step {step}: {error}")]
pub struct RunAborted<S: std::fmt::Debug> {
    pub step: usize,
    pub error: IntegratorError,
    pub partial: Trajectory<S>,
}

/// Default cap on the number of steps in one run.
pub const DEFAULT_MAX_STEPS: usize = 5_000_000;
