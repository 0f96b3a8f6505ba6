//! Python module `pyvarint`: Kepler runs with the adaptive integrators, step
//! statistics, the residual order study and config-driven experiment runs.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use varint::bea::{residual_order_estimate, OrderStudy, TimeProfile};
use varint::config::ExperimentConfig;
use varint::diagnostics::{angular_momentum_drift, energy_error_series, timestep_stats};
use varint::experiment::run_experiment;
use varint::integrators::{avi_calibrate_delta_a, avi_run, epavi_run, EpaviOptions, MonitorFn};
use varint::models::kepler_initial_state;
use varint::scalar::Arithmetic;
use varint::{DoubleDouble, LagrangianModel, PrecisionContext, Real, SolverConfig, Trajectory};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Trajectory of a Kepler run, flattened to `f64`.
#[pyclass(get_all, frozen)]
pub struct Run {
    pub t: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub h: Vec<f64>,
    pub h0: f64,
    pub delta_a: Option<f64>,
    pub max_energy_error: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub angular_momentum_drift: f64,
}

#[pymethods]
impl Run {
    fn __len__(&self) -> usize {
        self.t.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Run(steps={}, max_energy_error={:e}, mean_ratio={:.4}, max_ratio={:.4})",
            self.h.len(),
            self.max_energy_error,
            self.mean_ratio,
            self.max_ratio
        )
    }
}

fn to_run<S: Real>(traj: &Trajectory<S>, h0: f64, delta_a: Option<f64>) -> PyResult<Run> {
    let stats = timestep_stats(traj, h0).map_err(runtime_err)?;
    let conv = |v: &[S]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    Ok(Run {
        t: traj.times(),
        q: traj.states.iter().map(|s| conv(&s.q)).collect(),
        p: traj.states.iter().map(|s| conv(&s.p)).collect(),
        energy: traj.states.iter().map(|s| s.energy.as_f64()).collect(),
        h: traj.steps.iter().map(|r| r.h).collect(),
        h0,
        delta_a,
        max_energy_error: energy_error_series(traj).max(),
        mean_ratio: stats.mean_ratio,
        max_ratio: stats.max_ratio,
        angular_momentum_drift: angular_momentum_drift(traj),
    })
}

/// Initial state `(q, p, H)` of the Kepler orbit with eccentricity `e`.
#[pyfunction]
fn kepler_state(e: f64) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let s = kepler_initial_state::<f64>(e).map_err(value_err)?;
    Ok((s.q, s.p, s.energy))
}

fn epavi_generic<S: Real>(e: f64, h0: f64, t_final: f64, cfg: &SolverConfig) -> PyResult<Run> {
    let m = LagrangianModel::kepler();
    let s0 = kepler_initial_state::<S>(e).map_err(value_err)?;
    let traj = epavi_run(&m, &s0, S::of(h0), S::of(t_final), cfg, &EpaviOptions::default())
        .map_err(|a| runtime_err(format!("step {}: {}", a.step, a.error)))?;
    to_run(&traj, h0, None)
}

/// Energy-preserving adaptive run of the Kepler problem.
#[pyfunction]
#[pyo3(signature = (e, h0=0.001, t_final=std::f64::consts::TAU, tol=None, digits=16))]
fn epavi(e: f64, h0: f64, t_final: f64, tol: Option<f64>, digits: u32) -> PyResult<Run> {
    let ctx = PrecisionContext::new(digits).map_err(value_err)?;
    let cfg = SolverConfig::with_tol(tol.unwrap_or(ctx.default_tol()));
    cfg.validate().map_err(value_err)?;
    match ctx.arithmetic() {
        Arithmetic::Double => epavi_generic::<f64>(e, h0, t_final, &cfg),
        Arithmetic::DoubleDouble => epavi_generic::<DoubleDouble>(e, h0, t_final, &cfg),
    }
}

/// Monitor-function adaptive run of the Kepler problem; `monitor` is `"g1"`
/// (arclength) or `"g2"` (`q^T q`).
#[pyfunction]
#[pyo3(signature = (e, monitor="g2", h0=0.001, t_final=std::f64::consts::TAU, tol=1e-12))]
fn avi(e: f64, monitor: &str, h0: f64, t_final: f64, tol: f64) -> PyResult<Run> {
    let m = LagrangianModel::kepler();
    let s0 = kepler_initial_state::<f64>(e).map_err(value_err)?;
    let g = match monitor {
        "g1" => MonitorFn::Arclength { h0: s0.energy },
        "g2" => MonitorFn::Kepler,
        other => return Err(value_err(format!("unknown monitor {other:?}, expected g1 or g2"))),
    };
    let cfg = SolverConfig::with_tol(tol);
    cfg.validate().map_err(value_err)?;
    let da = avi_calibrate_delta_a(&m, g, &s0, h0, &cfg).map_err(runtime_err)?;
    let traj =
        avi_run(&m, g, &s0, da, t_final, &cfg).map_err(|a| runtime_err(format!("step {}: {}", a.step, a.error)))?;
    to_run(&traj, h0, Some(da))
}

/// Log-log slope of the discrete residual against the step for a 1-DOF
/// problem; `sine` is the amplitude of `t(a) = a + sine * sin a`.
#[pyfunction]
#[pyo3(signature = (problem="oscillator", sine=0.0, modified=false, delta_a=None))]
fn bea_slope(problem: &str, sine: f64, modified: bool, delta_a: Option<Vec<f64>>) -> PyResult<f64> {
    let model = match problem {
        "oscillator" => LagrangianModel::oscillator(1.0, 1.0),
        "pendulum" => LagrangianModel::pendulum(1.0, 1.0),
        other => return Err(value_err(format!("unknown problem {other:?}"))),
    }
    .map_err(value_err)?;
    let profile = if sine == 0.0 {
        TimeProfile::identity()
    } else {
        TimeProfile::Sine { c: sine }
    };
    let steps = delta_a.unwrap_or_else(|| vec![0.1, 0.05, 0.025, 0.0125]);
    residual_order_estimate(&model, profile, modified, &steps, &OrderStudy::default())
        .map(|r| r.slope)
        .map_err(runtime_err)
}

/// Runs a configured experiment (same keys as the CLI) and returns its summary.
#[pyfunction]
fn run_config(settings: HashMap<String, String>) -> PyResult<HashMap<String, String>> {
    let mut pairs: Vec<(String, String)> = settings.into_iter().collect();
    pairs.sort();
    let cfg = ExperimentConfig::from_pairs(&pairs).map_err(value_err)?;
    let outcome = run_experiment(&cfg).map_err(runtime_err)?;
    Ok(outcome
        .summary
        .to_text()
        .lines()
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect())
}

#[pymodule]
fn pyvarint(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Run>()?;
    m.add_function(wrap_pyfunction!(kepler_state, m)?)?;
    m.add_function(wrap_pyfunction!(epavi, m)?)?;
    m.add_function(wrap_pyfunction!(avi, m)?)?;
    m.add_function(wrap_pyfunction!(bea_slope, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
