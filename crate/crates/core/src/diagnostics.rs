//! Post-run analysis of trajectories.

use thiserror::Error;

use crate::integrators::{DenseSolution, IntegratorError, Trajectory};
use crate::models::{angular_momentum, LagrangianModel, ModelError};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("trajectory needs at least {0} states")]
    TooShort(usize),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Non-negative values sampled at increasing times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ErrorSeries {
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub mean_h: f64,
    pub max_h: f64,
    pub min_h: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelescopingCheck {
    /// `|E_N - E_0|` at the final state.
    pub lhs: f64,
    /// `N max_i |E_i - E_{i-1}|`.
    pub rhs: f64,
    /// Whether the bound held at every `k`.
    pub holds: bool,
    pub max_defect: f64,
}

/// `|E_k - E_0|` using the energies carried by the trajectory.
pub fn energy_error_series<S: Real>(traj: &Trajectory<S>) -> ErrorSeries {
    let e0 = traj.states[0].energy;
    ErrorSeries {
        times: traj.times(),
        values: traj.states.iter().map(|s| (s.energy - e0).abs().as_f64()).collect(),
    }
}

/// `|H(q_k, p_k) - H(q_0, p_0)|`.
pub fn hamiltonian_error_series<S: Real>(
    model: &LagrangianModel,
    traj: &Trajectory<S>,
) -> Result<ErrorSeries, DiagnosticsError> {
    let hs: Vec<S> = traj
        .states
        .iter()
        .map(|s| model.hamiltonian(&s.q, &s.p))
        .collect::<Result<_, _>>()?;
    Ok(ErrorSeries {
        times: traj.times(),
        values: hs.iter().map(|&h| (h - hs[0]).abs().as_f64()).collect(),
    })
}

/// Checks `|E_k - E_0| <= k max_{i <= k} |E_i - E_{i-1}|` at every `k`.
pub fn telescoping_bound_check<S: Real>(traj: &Trajectory<S>) -> Result<TelescopingCheck, DiagnosticsError> {
    if traj.len() < 2 {
        return Err(DiagnosticsError::TooShort(2));
    }
    let e0 = traj.states[0].energy;
    let mut max_defect = S::zero();
    let mut holds = true;
    let mut lhs = S::zero();
    let mut rhs = S::zero();
    for (k, w) in traj.states.windows(2).enumerate() {
        max_defect = max_defect.max((w[1].energy - w[0].energy).abs());
        lhs = (w[1].energy - e0).abs();
        rhs = max_defect * (k + 1) as f64;
        holds &= lhs <= rhs;
    }
    Ok(TelescopingCheck {
        lhs: lhs.as_f64(),
        rhs: rhs.as_f64(),
        holds,
        max_defect: max_defect.as_f64(),
    })
}

/// Per-coordinate `|q^i_k - q^i_ref(t_k)|` against a dense reference.
pub fn trajectory_error<S: Real>(
    traj: &Trajectory<S>,
    reference: &DenseSolution<S>,
) -> Result<Vec<ErrorSeries>, DiagnosticsError> {
    let n = traj.states[0].dim();
    let mut out = vec![
        ErrorSeries {
            times: traj.times(),
            values: Vec::with_capacity(traj.len())
        };
        n
    ];
    for s in &traj.states {
        let y = reference.eval(s.t)?;
        for (i, series) in out.iter_mut().enumerate() {
            series.values.push((s.q[i] - y[i]).abs().as_f64());
        }
    }
    Ok(out)
}

/// Statistics of `h_k = t_{k+1} - t_k`, ratios taken against `h0`.
pub fn timestep_stats<S: Real>(traj: &Trajectory<S>, h0: f64) -> Result<StepStats, DiagnosticsError> {
    if traj.len() < 2 {
        return Err(DiagnosticsError::TooShort(2));
    }
    let hs: Vec<f64> = traj.states.windows(2).map(|w| (w[1].t - w[0].t).as_f64()).collect();
    let n = hs.len();
    let mean_h = hs.iter().sum::<f64>() / n as f64;
    let max_h = hs.iter().copied().fold(f64::MIN, f64::max);
    let min_h = hs.iter().copied().fold(f64::MAX, f64::min);
    Ok(StepStats {
        mean_h,
        max_h,
        min_h: min_h.min(mean_h),
        mean_ratio: mean_h / h0,
        max_ratio: max_h / h0,
        steps: n,
    })
}

/// Largest `|L_z(k) - L_z(0)|` along a planar trajectory.
pub fn angular_momentum_drift<S: Real>(traj: &Trajectory<S>) -> f64 {
    let l0 = angular_momentum(&traj.states[0].q, &traj.states[0].p);
    traj.states
        .iter()
        .map(|s| (angular_momentum(&s.q, &s.p) - l0).abs().as_f64())
        .fold(0.0, f64::max)
}
