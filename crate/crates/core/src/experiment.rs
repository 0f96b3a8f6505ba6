//! Experiment runner: one configured run or a named suite of runs, writing
//! CSV diagnostics, a key=value summary and a plot script per run.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::bea::{residual_order_estimate, BeaError, OrderEstimate, OrderStudy, TimeProfile};
use crate::config::{ConfigError, ExperimentConfig, IntegratorKind, Problem};
use crate::diagnostics::{
    angular_momentum_drift, energy_error_series, hamiltonian_error_series, telescoping_bound_check, timestep_stats,
    trajectory_error,
};
use crate::integrators::{
    avi_calibrate_delta_a, avi_run, epavi_run, midpoint_fixed_run, reference_solve, EpaviOptions, IntegratorError,
    MonitorFn, RunAborted, Trajectory,
};
use crate::models::{kepler_initial_state, ExtendedState, LagrangianModel};
use crate::scalar::{Arithmetic, DoubleDouble, PrecisionContext, Real};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("output error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error(transparent)]
    Bea(#[from] BeaError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Machine-readable outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub problem: String,
    pub integrator: String,
    pub digits: u32,
    pub tol: f64,
    /// `None` when the run finished; the failure otherwise.
    pub error: Option<String>,
    pub steps: usize,
    pub t_end: f64,
    pub delta_a: Option<f64>,
    pub max_energy_error: f64,
    pub max_hamiltonian_error: f64,
    pub max_traj_error: Option<f64>,
    pub mean_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    pub max_step_defect: f64,
    pub max_residual: f64,
    pub telescoping_holds: bool,
    pub angular_momentum_drift: Option<f64>,
    pub wall_time_s: f64,
}

impl Summary {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"));
        let mut s = String::new();
        let _ = writeln!(s, "problem={}", self.problem);
        let _ = writeln!(s, "integrator={}", self.integrator);
        let _ = writeln!(s, "digits={}", self.digits);
        let _ = writeln!(s, "tol={:e}", self.tol);
        let _ = writeln!(s, "status={}", if self.ok() { "ok" } else { "failed" });
        if let Some(e) = &self.error {
            let _ = writeln!(s, "error={}", e.replace('\n', " "));
        }
        let _ = writeln!(s, "steps={}", self.steps);
        let _ = writeln!(s, "t_end={:e}", self.t_end);
        let _ = writeln!(s, "delta_a={}", opt(self.delta_a));
        let _ = writeln!(s, "max_energy_error={:e}", self.max_energy_error);
        let _ = writeln!(s, "max_hamiltonian_error={:e}", self.max_hamiltonian_error);
        let _ = writeln!(s, "max_traj_error={}", opt(self.max_traj_error));
        let _ = writeln!(s, "mean_step_ratio={}", opt(self.mean_ratio));
        let _ = writeln!(s, "max_step_ratio={}", opt(self.max_ratio));
        let _ = writeln!(s, "max_step_defect={:e}", self.max_step_defect);
        let _ = writeln!(s, "max_residual={:e}", self.max_residual);
        let _ = writeln!(s, "telescoping_holds={}", self.telescoping_holds);
        let _ = writeln!(s, "angular_momentum_drift={}", opt(self.angular_momentum_drift));
        let _ = writeln!(s, "wall_time_s={:.3}", self.wall_time_s);
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Summary,
}

fn initial_state<S: Real>(
    cfg: &ExperimentConfig,
    model: &LagrangianModel,
) -> Result<ExtendedState<S>, IntegratorError> {
    Ok(match cfg.problem {
        Problem::Kepler { e } => kepler_initial_state(e)?,
        Problem::Oscillator { q0, p0, .. } | Problem::Pendulum { q0, p0, .. } => {
            ExtendedState::from_model(model, S::zero(), vec![S::of(q0)], vec![S::of(p0)])?
        }
    })
}

struct RawRun<S: std::fmt::Debug> {
    traj: Trajectory<S>,
    error: Option<IntegratorError>,
    delta_a: Option<f64>,
}

fn integrate<S: Real>(cfg: &ExperimentConfig, model: &LagrangianModel) -> Result<RawRun<S>, IntegratorError> {
    let s0 = initial_state::<S>(cfg, model)?;
    let h0 = S::of(cfg.h0);
    let t_final = S::of(cfg.t_final);
    let finish = |r: Result<Trajectory<S>, RunAborted<S>>, delta_a: Option<f64>| match r {
        Ok(traj) => RawRun {
            traj,
            error: None,
            delta_a,
        },
        Err(a) => RawRun {
            traj: a.partial,
            error: Some(a.error),
            delta_a,
        },
    };
    Ok(match cfg.integrator {
        IntegratorKind::Epavi => {
            let opts = EpaviOptions {
                energy_init: cfg.energy_init,
                max_steps: cfg.max_steps,
            };
            finish(epavi_run(model, &s0, h0, t_final, &cfg.solver, &opts), None)
        }
        IntegratorKind::Avi1 | IntegratorKind::Avi2 => {
            let monitor = if cfg.integrator == IntegratorKind::Avi1 {
                MonitorFn::Arclength { h0: s0.energy.as_f64() }
            } else {
                MonitorFn::Kepler
            };
            let delta_a = match cfg.delta_a {
                Some(d) => S::of(d),
                None => avi_calibrate_delta_a(model, monitor, &s0, h0, &cfg.solver)?,
            };
            finish(
                avi_run(model, monitor, &s0, delta_a, t_final, &cfg.solver),
                Some(delta_a.as_f64()),
            )
        }
        IntegratorKind::MidpointFixed => finish(midpoint_fixed_run(model, &s0, h0, t_final, &cfg.solver), None),
        IntegratorKind::Reference => {
            let sol = reference_solve(model, &s0, t_final, cfg.reltol, cfg.abstol)?;
            RawRun {
                traj: sol.to_trajectory(model)?,
                error: None,
                delta_a: None,
            }
        }
    })
}

fn fmt_row<S: Real>(ctx: &PrecisionContext, vals: &[S]) -> String {
    vals.iter().map(|&v| ctx.format(v)).collect::<Vec<_>>().join(",")
}

fn run_generic<S: Real>(cfg: &ExperimentConfig, dir: &Path) -> Result<Summary, ExperimentError> {
    let started = Instant::now();
    let model = cfg.problem.model().map_err(ConfigError::from)?;
    let ctx = cfg.precision;
    let digits = ctx.digits() as usize;
    let f = |x: f64| x.to_sci(digits);
    let mut summary = Summary {
        problem: cfg.problem.name().into(),
        integrator: cfg.integrator.name().into(),
        digits: ctx.digits(),
        tol: cfg.solver.tol,
        error: None,
        steps: 0,
        t_end: 0.0,
        delta_a: None,
        max_energy_error: 0.0,
        max_hamiltonian_error: 0.0,
        max_traj_error: None,
        mean_ratio: None,
        max_ratio: None,
        max_step_defect: 0.0,
        max_residual: 0.0,
        telescoping_holds: true,
        angular_momentum_drift: None,
        wall_time_s: 0.0,
    };
    let raw = match integrate::<S>(cfg, &model) {
        Ok(r) => r,
        Err(e) => {
            summary.error = Some(e.to_string());
            summary.wall_time_s = started.elapsed().as_secs_f64();
            write_file(&dir.join("summary.txt"), &summary.to_text())?;
            return Ok(summary);
        }
    };
    let traj = &raw.traj;
    summary.error = raw.error.as_ref().map(|e| e.to_string());
    summary.delta_a = raw.delta_a;
    summary.steps = traj.steps.len();
    summary.t_end = traj.last().t.as_f64();
    summary.max_residual = traj.steps.iter().map(|r| r.residual).fold(0.0, f64::max);
    let n = model.dim();

    let mut csv = String::from("k,t");
    for i in 1..=n {
        let _ = write!(csv, ",q{i}");
    }
    for i in 1..=n {
        let _ = write!(csv, ",p{i}");
    }
    csv.push_str(",E,h,residual,newton_iters\n");
    for (k, s) in traj.states.iter().enumerate() {
        let (h, res, it) = match k.checked_sub(1).map(|j| traj.steps[j]) {
            Some(r) => (r.h, r.residual, r.newton_iters),
            None => (0.0, 0.0, 0),
        };
        let mut vals = vec![s.t];
        vals.extend_from_slice(&s.q);
        vals.extend_from_slice(&s.p);
        vals.push(s.energy);
        let _ = writeln!(csv, "{k},{},{},{},{it}", fmt_row(&ctx, &vals), f(h), f(res));
    }
    write_file(&dir.join("trajectory.csv"), &csv)?;

    let energy = energy_error_series(traj);
    let ham = hamiltonian_error_series(&model, traj).ok();
    summary.max_energy_error = energy.max();
    summary.max_hamiltonian_error = ham.as_ref().map_or(f64::NAN, |h| h.max());
    let mut csv = String::from("k,t,energy_error,hamiltonian_error\n");
    for k in 0..energy.len() {
        let hv = ham.as_ref().map_or(f64::NAN, |h| h.values[k]);
        let _ = writeln!(
            csv,
            "{k},{},{},{}",
            ctx.format(traj.states[k].t),
            f(energy.values[k]),
            f(hv)
        );
    }
    write_file(&dir.join("energy_error.csv"), &csv)?;

    if traj.len() >= 2 {
        if let Ok(chk) = telescoping_bound_check(traj) {
            summary.telescoping_holds = chk.holds;
            summary.max_step_defect = chk.max_defect;
        }
        if let Ok(st) = timestep_stats(traj, cfg.h0) {
            summary.mean_ratio = Some(st.mean_ratio);
            summary.max_ratio = Some(st.max_ratio);
            let csv = format!(
                "mean_h,max_h,min_h,mean_ratio,max_ratio,steps\n{},{},{},{},{},{}\n",
                f(st.mean_h),
                f(st.max_h),
                f(st.min_h),
                f(st.mean_ratio),
                f(st.max_ratio),
                st.steps
            );
            write_file(&dir.join("stats.csv"), &csv)?;
        }
    }
    if n == 2 {
        summary.angular_momentum_drift = Some(angular_momentum_drift(traj));
    }

    let t_end = traj.last().t;
    let reference = reference_solve(&model, &traj.states[0], t_end, cfg.ref_reltol, cfg.ref_abstol);
    match reference.map_err(Into::into).and_then(|r| trajectory_error(traj, &r)) {
        Ok(errs) => {
            summary.max_traj_error = Some(errs.iter().map(|e| e.max()).fold(0.0, f64::max));
            let mut csv = String::from("k,t");
            for i in 1..=n {
                let _ = write!(csv, ",err_q{i}");
            }
            csv.push('\n');
            for k in 0..traj.len() {
                let _ = write!(csv, "{k},{}", ctx.format(traj.states[k].t));
                for e in &errs {
                    let _ = write!(csv, ",{}", f(e.values[k]));
                }
                csv.push('\n');
            }
            write_file(&dir.join("traj_error.csv"), &csv)?;
        }
        Err(e) => {
            if summary.error.is_none() {
                summary.error = Some(format!("reference solution failed: {e}"));
            }
        }
    }
    write_file(&dir.join("plot.py"), PLOT_SCRIPT)?;
    summary.wall_time_s = started.elapsed().as_secs_f64();
    write_file(&dir.join("summary.txt"), &summary.to_text())?;
    Ok(summary)
}

/// Runs one configured experiment into `cfg.out`. Numerical failures are
/// reported in the summary (with partial outputs), not as errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, ExperimentError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let mut config_text = String::new();
    for (k, v) in cfg.to_pairs() {
        let _ = writeln!(config_text, "{k}={v}");
    }
    write_file(&cfg.out.join("config.txt"), &config_text)?;
    let summary = match cfg.precision.arithmetic() {
        Arithmetic::Double => run_generic::<f64>(cfg, &cfg.out)?,
        Arithmetic::DoubleDouble => run_generic::<DoubleDouble>(cfg, &cfg.out)?,
    };
    Ok(RunOutcome {
        dir: cfg.out.clone(),
        summary,
    })
}

pub const SUITES: [&str; 5] = ["fig_e01", "fig_e07", "vpa_study", "bea_orders", "h0_sensitivity"];

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub members: Vec<(String, Result<Summary, String>)>,
    pub bea: Vec<BeaCase>,
}

impl SuiteOutcome {
    pub fn all_ok(&self) -> bool {
        self.members.iter().all(|(_, r)| matches!(r, Ok(s) if s.ok()))
    }
}

fn kepler(e: f64, integrator: IntegratorKind, h0: f64) -> ExperimentConfig {
    ExperimentConfig {
        problem: Problem::Kepler { e },
        integrator,
        h0,
        ..ExperimentConfig::default()
    }
}

/// Member configs of a named suite, keyed by member name.
pub fn suite_members(name: &str) -> Result<Vec<(String, ExperimentConfig)>, ExperimentError> {
    let adaptive = [IntegratorKind::Epavi, IntegratorKind::Avi1, IntegratorKind::Avi2];
    Ok(match name {
        "fig_e01" | "fig_e07" => {
            let e = if name == "fig_e01" { 0.1 } else { 0.7 };
            adaptive
                .iter()
                .map(|&k| (k.name().to_string(), kepler(e, k, 0.001)))
                .collect()
        }
        "vpa_study" => {
            let mut v = Vec::new();
            let mut double = kepler(0.7, IntegratorKind::Epavi, 0.001);
            double.solver.tol = 1e-15;
            v.push(("double_tol1e-15".to_string(), double));
            for tol in [1e-15, 1e-16, 1e-17] {
                let mut c = kepler(0.7, IntegratorKind::Epavi, 0.001);
                c.precision = PrecisionContext::new(18).expect("18 digits");
                c.solver.tol = tol;
                v.push((format!("digits18_tol{tol:e}"), c));
            }
            v
        }
        "h0_sensitivity" => adaptive
            .iter()
            .flat_map(|&k| [0.001, 0.01].map(|h0| (format!("{}_h0_{h0}", k.name()), kepler(0.7, k, h0))))
            .collect(),
        "bea_orders" => Vec::new(),
        other => return Err(ExperimentError::UnknownSuite(other.to_string())),
    })
}

/// One problem/profile combination of the order study.
#[derive(Debug, Clone)]
pub struct BeaCase {
    pub label: String,
    pub leading: OrderEstimate,
    pub modified: OrderEstimate,
}

impl BeaCase {
    pub fn improvement(&self) -> f64 {
        self.modified.slope - self.leading.slope
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta_a,residual_inf_norm,flag\n");
        for (est, flag) in [(&self.leading, 0), (&self.modified, 1)] {
            for p in &est.points {
                let _ = writeln!(s, "{:e},{:e},{flag}", p.0, p.1);
            }
        }
        let _ = writeln!(
            s,
            "# slope_leading={:.4} slope_modified={:.4} improvement={:.4}",
            self.leading.slope,
            self.modified.slope,
            self.improvement()
        );
        s
    }
}

pub const BEA_STEPS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

/// Order study for a named 1-DOF problem and time profile.
pub fn bea_case(problem: &str, profile: TimeProfile, delta_as: &[f64]) -> Result<BeaCase, ExperimentError> {
    let model = match problem {
        "oscillator" => LagrangianModel::oscillator(1.0, 1.0),
        "pendulum" => LagrangianModel::pendulum(1.0, 1.0),
        other => {
            return Err(ConfigError::Value {
                key: "problem".into(),
                value: other.into(),
                reason: "order study supports oscillator or pendulum".into(),
            }
            .into())
        }
    }
    .map_err(ConfigError::from)?;
    let study = OrderStudy::default();
    let leading = residual_order_estimate(&model, profile, false, delta_as, &study)?;
    let modified = residual_order_estimate(&model, profile, true, delta_as, &study)?;
    let label = match profile {
        TimeProfile::Linear { scale } => format!("{problem}_linear{scale}"),
        TimeProfile::Sine { c } => format!("{problem}_sine{c}"),
    };
    Ok(BeaCase {
        label,
        leading,
        modified,
    })
}

fn pool(workers: usize) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if workers > 0 {
        b = b.num_threads(workers);
    }
    b.build().expect("thread pool")
}

/// Runs every member of a named suite under `out/<name>/` and writes a
/// comparison CSV. Member failures are recorded; the suite continues.
pub fn run_suite(name: &str, out: &Path, workers: usize) -> Result<SuiteOutcome, ExperimentError> {
    let members = suite_members(name)?;
    let dir = out.join(name);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let pool = pool(workers);

    if name == "bea_orders" {
        let cases = [
            ("oscillator", TimeProfile::identity()),
            ("pendulum", TimeProfile::Sine { c: 0.1 }),
        ];
        let results: Vec<Result<BeaCase, ExperimentError>> = pool.install(|| {
            cases
                .par_iter()
                .map(|&(p, prof)| bea_case(p, prof, &BEA_STEPS))
                .collect()
        });
        let mut table = String::from("case,slope_leading,slope_modified,improvement\n");
        let mut done = Vec::new();
        for r in results {
            let case = r?;
            write_file(&dir.join(format!("bea_{}.csv", case.label)), &case.to_csv())?;
            let _ = writeln!(
                table,
                "{},{:.4},{:.4},{:.4}",
                case.label,
                case.leading.slope,
                case.modified.slope,
                case.improvement()
            );
            done.push(case);
        }
        write_file(&dir.join("comparison.csv"), &table)?;
        return Ok(SuiteOutcome {
            name: name.into(),
            dir,
            members: Vec::new(),
            bea: done,
        });
    }

    let results: Vec<(String, Result<Summary, String>)> = pool.install(|| {
        members
            .into_par_iter()
            .map(|(member, mut cfg)| {
                cfg.out = dir.join(&member);
                let r = run_experiment(&cfg).map(|o| o.summary).map_err(|e| e.to_string());
                (member, r)
            })
            .collect()
    });
    let mut table = String::from(
        "member,integrator,digits,tol,status,steps,max_energy_error,max_traj_error,mean_step_ratio,max_step_ratio,angular_momentum_drift\n",
    );
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".into(), |x| format!("{x:e}"));
    for (member, r) in &results {
        match r {
            Ok(s) => {
                let _ = writeln!(
                    table,
                    "{member},{},{},{:e},{},{},{:e},{},{},{},{}",
                    s.integrator,
                    s.digits,
                    s.tol,
                    if s.ok() { "ok" } else { "failed" },
                    s.steps,
                    s.max_energy_error,
                    opt(s.max_traj_error),
                    opt(s.mean_ratio),
                    opt(s.max_ratio),
                    opt(s.angular_momentum_drift)
                );
            }
            Err(e) => {
                let _ = writeln!(table, "{member},,,,error: {},,,,,,", e.replace(',', ";"));
            }
        }
    }
    write_file(&dir.join("comparison.csv"), &table)?;
    Ok(SuiteOutcome {
        name: name.into(),
        dir,
        members: results,
        bea: Vec::new(),
    })
}

const PLOT_SCRIPT: &str = r#"# Four-panel summary of one run; reads the CSV files next to this script.
import csv
import os
import sys

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))


def load(name):
    path = os.path.join(here, name)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {k: [float(r[k]) for r in rows] for k in rows[0]} if rows else None


traj = load("trajectory.csv")
energy = load("energy_error.csv")
err = load("traj_error.csv")
if traj is None:
    sys.exit("trajectory.csv missing")

fig, ax = plt.subplots(2, 2, figsize=(10, 8))
if "q2" in traj:
    ax[0, 0].plot(traj["q1"], traj["q2"], lw=0.8)
    ax[0, 0].set_xlabel("$q^1$")
    ax[0, 0].set_ylabel("$q^2$")
    ax[0, 0].set_aspect("equal")
else:
    ax[0, 0].plot(traj["t"], traj["q1"], lw=0.8)
    ax[0, 0].set_xlabel("t")
    ax[0, 0].set_ylabel("q")
ax[0, 0].set_title("trajectory")

if energy is not None:
    ax[0, 1].semilogy(energy["t"][1:], [max(v, 1e-300) for v in energy["energy_error"][1:]], lw=0.8)
ax[0, 1].set_xlabel("t")
ax[0, 1].set_title("energy error")

if err is not None:
    ax[1, 0].semilogy(err["t"][1:], [max(v, 1e-300) for v in err["err_q1"][1:]], lw=0.8)
ax[1, 0].set_xlabel("t")
ax[1, 0].set_title("$q^1$ trajectory error")

ax[1, 1].plot(traj["k"], traj["t"], lw=0.8)
ax[1, 1].set_xlabel("k")
ax[1, 1].set_ylabel("t")
ax[1, 1].set_title("time adaptation")

fig.tight_layout()
fig.savefig(os.path.join(here, "plot.png"), dpi=120)
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(matches!(suite_members("fig9"), Err(ExperimentError::UnknownSuite(_))));
    }

    #[test]
    fn comparison_suites_have_three_adaptive_members() {
        for s in ["fig_e01", "fig_e07"] {
            let m = suite_members(s).unwrap();
            let names: Vec<_> = m.iter().map(|(n, _)| n.as_str()).collect();
            assert_eq!(names, ["epavi", "avi1", "avi2"]);
        }
        let vpa = suite_members("vpa_study").unwrap();
        assert_eq!(vpa.iter().filter(|(_, c)| c.precision.digits() == 18).count(), 3);
    }

    #[test]
    fn summary_text_is_key_value() {
        let s = Summary {
            problem: "kepler".into(),
            integrator: "epavi".into(),
            digits: 16,
            tol: 1e-12,
            error: None,
            steps: 3,
            t_end: 1.0,
            delta_a: None,
            max_energy_error: 1e-15,
            max_hamiltonian_error: 1e-7,
            max_traj_error: Some(1e-6),
            mean_ratio: Some(6.2),
            max_ratio: Some(12.9),
            max_step_defect: 1e-16,
            max_residual: 1e-16,
            telescoping_holds: true,
            angular_momentum_drift: None,
            wall_time_s: 0.0,
        };
        for line in s.to_text().lines() {
            assert!(line.contains('='), "{line}");
        }
        assert!(s.to_text().contains("status=ok"));
    }
}
