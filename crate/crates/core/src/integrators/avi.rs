use super::midpoint::midpoint;
use super::{IntegratorError, MonitorFn, RunAborted, StepRecord, Trajectory, DEFAULT_MAX_STEPS};
use crate::linalg::inf_norm;
use crate::models::{ExtendedState, LagrangianModel};
use crate::scalar::Real;
use crate::solvers::{newton_solve, NonlinearSystem, SolverConfig, SolverError};

/// Extended AVI state: configuration, clock `q^t = t`, momentum and the
/// conserved clock momentum `p^t = -H(q_0, p_0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AviState<S> {
    pub q: Vec<S>,
    pub q_t: S,
    pub p: Vec<S>,
    pub p_t: S,
}

impl<S: Real> AviState<S> {
    pub fn from_extended(model: &LagrangianModel, s: &ExtendedState<S>) -> Result<Self, IntegratorError> {
        Ok(Self {
            q: s.q.clone(),
            q_t: s.t,
            p: s.p.clone(),
            p_t: -model.hamiltonian(&s.q, &s.p)?,
        })
    }

    pub fn to_extended(&self, model: &LagrangianModel) -> Result<ExtendedState<S>, IntegratorError> {
        Ok(ExtendedState::from_model(
            model,
            self.q_t,
            self.q.clone(),
            self.p.clone(),
        )?)
    }
}

/// Implicit-midpoint equations of the transformed Hamiltonian in the unknowns
/// `(q_{k+1}, p_{k+1})`.
struct AviSystem<'a, S> {
    model: &'a LagrangianModel,
    monitor: MonitorFn,
    q: &'a [S],
    p: &'a [S],
    delta_a: S,
}

fn domain(e: impl std::fmt::Display) -> SolverError {
    SolverError::Domain(e.to_string())
}

impl<S: Real> NonlinearSystem<S> for AviSystem<'_, S> {
    fn residual(&self, x: &[S]) -> Result<Vec<S>, SolverError> {
        let n = self.q.len();
        let qa = midpoint(self.q, &x[..n]);
        let pa = midpoint(self.p, &x[n..]);
        let g = self.monitor.value(self.model, &qa).map_err(domain)?;
        let scale = self.delta_a * g;
        let vel = self.model.mass_inv_mul(&pa);
        let grad = self.model.grad(&qa).map_err(domain)?;
        let mut f: Vec<S> = (0..n).map(|i| x[i] - self.q[i] - scale * vel[i]).collect();
        f.extend((0..n).map(|i| x[n + i] - self.p[i] + scale * grad[i]));
        Ok(f)
    }
}

/// One AVI step with fictitious step `delta_a`. The returned state carries
/// `E = H(q_{k+1}, p_{k+1})`.
pub fn avi_step<S: Real>(
    model: &LagrangianModel,
    monitor: MonitorFn,
    state: &AviState<S>,
    delta_a: S,
    cfg: &SolverConfig,
) -> Result<(AviState<S>, StepRecord), IntegratorError> {
    if !(delta_a > S::zero()) {
        return Err(IntegratorError::Invalid("delta_a must be positive".into()));
    }
    let n = state.q.len();
    let g0 = monitor.value(model, &state.q)?;
    let vel = model.mass_inv_mul(&state.p);
    let grad = model.grad(&state.q)?;
    let scale = delta_a * g0;
    let mut x0: Vec<S> = (0..n).map(|i| state.q[i] + scale * vel[i]).collect();
    x0.extend((0..n).map(|i| state.p[i] - scale * grad[i]));
    let sys = AviSystem {
        model,
        monitor,
        q: &state.q,
        p: &state.p,
        delta_a,
    };
    let rep = newton_solve(&sys, &x0, cfg)?;
    let x = &rep.solution;
    let g = monitor.value(model, &midpoint(&state.q, &x[..n]))?;
    let h = delta_a * g;
    let q_t = state.q_t + h;
    if !(q_t > state.q_t) {
        return Err(IntegratorError::NonMonotoneTime {
            prev: state.q_t.as_f64(),
            next: q_t.as_f64(),
        });
    }
    let next = AviState {
        q: x[..n].to_vec(),
        q_t,
        p: x[n..].to_vec(),
        p_t: state.p_t,
    };
    let record = StepRecord {
        h: h.as_f64(),
        residual: inf_norm(&sys.residual(x)?).as_f64(),
        newton_iters: rep.iterations,
        delta_a: Some(delta_a.as_f64()),
        condition: rep.condition_estimate,
        retried: false,
    };
    Ok((next, record))
}

/// Fictitious step whose first physical step equals `h0`: starts at
/// `h0 / g(q_0)` and rescales until the realized step matches.
pub fn avi_calibrate_delta_a<S: Real>(
    model: &LagrangianModel,
    monitor: MonitorFn,
    state0: &ExtendedState<S>,
    h0: S,
    cfg: &SolverConfig,
) -> Result<S, IntegratorError> {
    if !(h0 > S::zero()) {
        return Err(IntegratorError::Invalid("h0 must be positive".into()));
    }
    let start = AviState::from_extended(model, state0)?;
    let mut delta_a = h0 / monitor.value(model, &state0.q)?;
    for _ in 0..20 {
        let (next, _) = avi_step(model, monitor, &start, delta_a, cfg)?;
        let h = next.q_t - start.q_t;
        let ratio = h0 / h;
        delta_a *= ratio;
        if (ratio - 1.0).abs().as_f64() < 1e-13 {
            break;
        }
    }
    Ok(delta_a)
}

/// Fixed-`delta_a` AVI run until `t >= t_final`.
pub fn avi_run<S: Real>(
    model: &LagrangianModel,
    monitor: MonitorFn,
    state0: &ExtendedState<S>,
    delta_a: S,
    t_final: S,
    cfg: &SolverConfig,
) -> Result<Trajectory<S>, RunAborted<S>> {
    let abort = |traj: Trajectory<S>, error: IntegratorError| RunAborted {
        step: traj.steps.len(),
        error,
        partial: traj,
    };
    let mut state = match AviState::from_extended(model, state0) {
        Ok(s) => s,
        Err(e) => return Err(abort(Trajectory::new(state0.clone()), e)),
    };
    let mut first = state0.clone();
    first.energy = -state.p_t;
    let mut traj = Trajectory::new(first);
    while state.q_t < t_final {
        if traj.steps.len() >= DEFAULT_MAX_STEPS {
            return Err(abort(traj, IntegratorError::StepLimit(DEFAULT_MAX_STEPS)));
        }
        let stepped = avi_step(model, monitor, &state, delta_a, cfg)
            .and_then(|(next, rec)| Ok((next.to_extended(model)?, next, rec)));
        match stepped {
            Ok((ext, next, rec)) => {
                traj.push(ext, rec);
                state = next;
            }
            Err(e) => return Err(abort(traj, e)),
        }
    }
    Ok(traj)
}
