use super::midpoint::{partials_from_velocity, velocity_predictor, MomentumSystem};
use super::{IntegratorError, RunAborted, StepRecord, Trajectory, DEFAULT_MAX_STEPS};
use crate::linalg::{dot, inf_norm, Matrix};
use crate::models::{ExtendedState, LagrangianModel};
use crate::scalar::Real;
use crate::solvers::{newton_solve, NonlinearSystem, SolverConfig, SolverError};

/// How the conserved discrete energy `E_0` is fixed at the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnergyInit {
    /// Discrete energy of a first midpoint step of length exactly `h0`.
    #[default]
    FirstStep,
    /// Use the energy stored in the initial state (normally `H(q_0, p_0)`).
    FromState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpaviOptions {
    pub energy_init: EnergyInit,
    pub max_steps: usize,
}

impl Default for EpaviOptions {
    fn default() -> Self {
        Self {
            energy_init: EnergyInit::FirstStep,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// Implicit pair `-D2 = p_k`, `D1 = E_k` in the unknowns `(v, h)`,
/// `v = (q_{k+1} - q_k) / h`.
struct EpaviSystem<'a, S> {
    model: &'a LagrangianModel,
    q: &'a [S],
    p: &'a [S],
    energy: S,
}

fn domain(e: impl std::fmt::Display) -> SolverError {
    SolverError::Domain(e.to_string())
}

impl<S: Real> EpaviSystem<'_, S> {
    fn midpoint(&self, v: &[S], h: S) -> Vec<S> {
        self.q.iter().zip(v).map(|(&q, &vi)| q + vi * h * 0.5).collect()
    }
}

impl<S: Real> NonlinearSystem<S> for EpaviSystem<'_, S> {
    fn residual(&self, x: &[S]) -> Result<Vec<S>, SolverError> {
        let n = self.q.len();
        let (v, h) = (&x[..n], x[n]);
        let qm = self.midpoint(v, h);
        let grad = self.model.grad(&qm).map_err(domain)?;
        let mv = self.model.mass_mul(v);
        let half = h * 0.5;
        let mut f: Vec<S> = (0..n).map(|i| mv[i] + grad[i] * half - self.p[i]).collect();
        f.push(dot(v, &mv) * 0.5 + self.model.potential(&qm).map_err(domain)? - self.energy);
        Ok(f)
    }

    fn jacobian(&self, x: &[S]) -> Option<Result<Matrix<S>, SolverError>> {
        let n = self.q.len();
        let (v, h) = (&x[..n], x[n]);
        let qm = self.midpoint(v, h);
        let eval = || -> Result<Matrix<S>, SolverError> {
            let grad = self.model.grad(&qm).map_err(domain)?;
            let hess = self.model.hessian(&qm).map_err(domain)?;
            let mass = self.model.mass_s::<S>();
            let mv = self.model.mass_mul(v);
            let hv = hess.mul_vec(v);
            let mut j = Matrix::zeros(n + 1, n + 1);
            let c = h * h * 0.25;
            for r in 0..n {
                for col in 0..n {
                    j[(r, col)] = mass[(r, col)] + hess[(r, col)] * c;
                }
                j[(r, n)] = grad[r] * 0.5 + hv[r] * h * 0.25;
                j[(n, r)] = mv[r] + grad[r] * h * 0.5;
            }
            j[(n, n)] = dot(&grad, v) * 0.5;
            Ok(j)
        };
        Some(eval())
    }
}

/// Discrete energy `D1 L_d` of the midpoint step of length `h0` leaving `state`.
pub fn epavi_first_energy<S: Real>(
    model: &LagrangianModel,
    state: &ExtendedState<S>,
    h0: S,
    cfg: &SolverConfig,
) -> Result<S, IntegratorError> {
    if !(h0 > S::zero()) {
        return Err(IntegratorError::Invalid("h0 must be positive".into()));
    }
    let guess = velocity_predictor(model, &state.q, &state.p, h0)?;
    let sys = MomentumSystem {
        model,
        q: &state.q,
        p: &state.p,
        h: h0,
    };
    let rep = newton_solve(&sys, &guess, cfg)?;
    Ok(partials_from_velocity(model, &state.q, &rep.solution, h0)?.d1)
}

/// One energy-preserving step: solve the implicit pair for `(q_{k+1}, t_{k+1})`,
/// then update `p_{k+1} = D4` and `E_{k+1} = -D3` explicitly.
pub fn epavi_step<S: Real>(
    model: &LagrangianModel,
    state: &ExtendedState<S>,
    h_guess: S,
    cfg: &SolverConfig,
) -> Result<(ExtendedState<S>, StepRecord), IntegratorError> {
    if !state.is_finite() {
        return Err(IntegratorError::Invalid("state is not finite".into()));
    }
    if !(h_guess > S::zero()) {
        return Err(IntegratorError::Invalid("step guess must be positive".into()));
    }
    let n = state.dim();
    let mut x0 = velocity_predictor(model, &state.q, &state.p, h_guess)?;
    x0.push(h_guess);
    let sys = EpaviSystem {
        model,
        q: &state.q,
        p: &state.p,
        energy: state.energy,
    };
    let rep = newton_solve(&sys, &x0, cfg)?;
    let (v, h) = (&rep.solution[..n], rep.solution[n]);
    let t1 = state.t + h;
    if !(t1 > state.t) {
        return Err(IntegratorError::NonMonotoneTime {
            prev: state.t.as_f64(),
            next: t1.as_f64(),
        });
    }
    let d = partials_from_velocity(model, &state.q, v, h)?;
    let q1: Vec<S> = state.q.iter().zip(v).map(|(&q, &vi)| q + vi * h).collect();
    let next = ExtendedState::new(t1, q1, d.d4, -d.d3);
    let record = StepRecord {
        h: h.as_f64(),
        residual: inf_norm(&sys.residual(&rep.solution)?).as_f64(),
        newton_iters: rep.iterations,
        delta_a: None,
        condition: rep.condition_estimate,
        retried: false,
    };
    Ok((next, record))
}

/// Iterates [`epavi_step`] from `state0` until `t >= t_final`. Each step starts
/// from the previous accepted step length; a failed step is retried once with
/// half the guess.
pub fn epavi_run<S: Real>(
    model: &LagrangianModel,
    state0: &ExtendedState<S>,
    h0: S,
    t_final: S,
    cfg: &SolverConfig,
    opts: &EpaviOptions,
) -> Result<Trajectory<S>, RunAborted<S>> {
    let mut start = state0.clone();
    let abort = |traj: Trajectory<S>, error: IntegratorError| RunAborted {
        step: traj.steps.len(),
        error,
        partial: traj,
    };
    if !(h0 > S::zero()) {
        return Err(abort(
            Trajectory::new(start),
            IntegratorError::Invalid("h0 must be positive".into()),
        ));
    }
    if t_final > start.t && opts.energy_init == EnergyInit::FirstStep {
        match epavi_first_energy(model, &start, h0, cfg) {
            Ok(e) => start.energy = e,
            Err(e) => return Err(abort(Trajectory::new(start), e)),
        }
    }
    let mut traj = Trajectory::new(start);
    let mut h = h0;
    while traj.last().t < t_final {
        if traj.steps.len() >= opts.max_steps {
            return Err(abort(traj, IntegratorError::StepLimit(opts.max_steps)));
        }
        let attempt = epavi_step(model, traj.last(), h, cfg).or_else(|_| {
            epavi_step(model, traj.last(), h * 0.5, cfg).map(|(s, mut r)| {
                r.retried = true;
                (s, r)
            })
        });
        match attempt {
            Ok((state, record)) => {
                h = state.t - traj.last().t;
                traj.push(state, record);
            }
            Err(e) => return Err(abort(traj, e)),
        }
    }
    Ok(traj)
}
