use super::{IntegratorError, RunAborted, StepRecord, Trajectory, DEFAULT_MAX_STEPS};
use crate::linalg::{dot, inf_norm, Matrix};
use crate::models::{ExtendedState, LagrangianModel};
use crate::scalar::Real;
use crate::solvers::{newton_solve, NonlinearSystem, SolverConfig, SolverError};

/// Partial derivatives of the discrete Lagrangian with respect to
/// `(t_k, q_k, t_{k+1}, q_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePartials<S> {
    pub d1: S,
    pub d2: Vec<S>,
    pub d3: S,
    pub d4: Vec<S>,
}

fn step_length<S: Real>(t_k: S, t_k1: S) -> Result<S, IntegratorError> {
    let h = t_k1 - t_k;
    if !(h > S::zero()) {
        return Err(IntegratorError::NonMonotoneTime {
            prev: t_k.as_f64(),
            next: t_k1.as_f64(),
        });
    }
    Ok(h)
}

pub(crate) fn midpoint<S: Real>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| (x + y) * 0.5).collect()
}

/// `(t_{k+1} - t_k) L((q_k + q_{k+1})/2, (q_{k+1} - q_k)/(t_{k+1} - t_k))`.
pub fn discrete_lagrangian_midpoint<S: Real>(
    model: &LagrangianModel,
    t_k: S,
    q_k: &[S],
    t_k1: S,
    q_k1: &[S],
) -> Result<S, IntegratorError> {
    let h = step_length(t_k, t_k1)?;
    let v: Vec<S> = q_k1.iter().zip(q_k).map(|(&b, &a)| (b - a) / h).collect();
    Ok(h * model.lagrangian(&midpoint(q_k, q_k1), &v)?)
}

/// Partials of the midpoint discrete Lagrangian, written in terms of the
/// average velocity `v` and the step `h` directly.
pub(crate) fn partials_from_velocity<S: Real>(
    model: &LagrangianModel,
    q_k: &[S],
    v: &[S],
    h: S,
) -> Result<DiscretePartials<S>, IntegratorError> {
    let qm: Vec<S> = q_k.iter().zip(v).map(|(&q, &vi)| q + vi * h * 0.5).collect();
    let mv = model.mass_mul(v);
    let grad = model.grad(&qm)?;
    let d1 = dot(v, &mv) * 0.5 + model.potential(&qm)?;
    let half_h = h * 0.5;
    Ok(DiscretePartials {
        d1,
        d2: mv.iter().zip(&grad).map(|(&m, &g)| -m - g * half_h).collect(),
        d3: -d1,
        d4: mv.iter().zip(&grad).map(|(&m, &g)| m - g * half_h).collect(),
    })
}

pub fn discrete_partials_midpoint<S: Real>(
    model: &LagrangianModel,
    t_k: S,
    q_k: &[S],
    t_k1: S,
    q_k1: &[S],
) -> Result<DiscretePartials<S>, IntegratorError> {
    let h = step_length(t_k, t_k1)?;
    let v: Vec<S> = q_k1.iter().zip(q_k).map(|(&b, &a)| (b - a) / h).collect();
    partials_from_velocity(model, q_k, &v, h)
}

/// `M v + (h/2) grad V(q + h v / 2) - p` as a function of `v` at fixed `h`.
pub(crate) struct MomentumSystem<'a, S> {
    pub model: &'a LagrangianModel,
    pub q: &'a [S],
    pub p: &'a [S],
    pub h: S,
}

impl<S: Real> NonlinearSystem<S> for MomentumSystem<'_, S> {
    fn residual(&self, v: &[S]) -> Result<Vec<S>, SolverError> {
        let half = self.h * 0.5;
        let qm: Vec<S> = self.q.iter().zip(v).map(|(&q, &vi)| q + vi * half).collect();
        let grad = self.model.grad(&qm).map_err(|e| SolverError::Domain(e.to_string()))?;
        let mv = self.model.mass_mul(v);
        Ok((0..v.len()).map(|i| mv[i] + grad[i] * half - self.p[i]).collect())
    }

    fn jacobian(&self, v: &[S]) -> Option<Result<Matrix<S>, SolverError>> {
        let half = self.h * 0.5;
        let qm: Vec<S> = self.q.iter().zip(v).map(|(&q, &vi)| q + vi * half).collect();
        Some(
            self.model
                .hessian(&qm)
                .map_err(|e| SolverError::Domain(e.to_string()))
                .map(|hess| {
                    let n = v.len();
                    let mut j = self.model.mass_s::<S>();
                    let c = self.h * self.h * 0.25;
                    for r in 0..n {
                        for col in 0..n {
                            j[(r, col)] += hess[(r, col)] * c;
                        }
                    }
                    j
                }),
        )
    }
}

/// Velocity guess consistent with the momentum equation to first order.
pub(crate) fn velocity_predictor<S: Real>(
    model: &LagrangianModel,
    q: &[S],
    p: &[S],
    h: S,
) -> Result<Vec<S>, IntegratorError> {
    let v0 = model.mass_inv_mul(p);
    let qm: Vec<S> = q.iter().zip(&v0).map(|(&qi, &vi)| qi + vi * h * 0.5).collect();
    let g = model.grad(&qm)?;
    let rhs: Vec<S> = p.iter().zip(&g).map(|(&pi, &gi)| pi - gi * h * 0.5).collect();
    Ok(model.mass_inv_mul(&rhs))
}

/// One step of the fixed-step variational midpoint integrator.
pub fn midpoint_fixed_step<S: Real>(
    model: &LagrangianModel,
    state: &ExtendedState<S>,
    h: S,
    cfg: &SolverConfig,
) -> Result<(ExtendedState<S>, StepRecord), IntegratorError> {
    if !(h > S::zero()) {
        return Err(IntegratorError::Invalid("step must be positive".into()));
    }
    let guess = velocity_predictor(model, &state.q, &state.p, h)?;
    let sys = MomentumSystem {
        model,
        q: &state.q,
        p: &state.p,
        h,
    };
    let rep = newton_solve(&sys, &guess, cfg)?;
    let v = rep.solution;
    let d = partials_from_velocity(model, &state.q, &v, h)?;
    let q1: Vec<S> = state.q.iter().zip(&v).map(|(&q, &vi)| q + vi * h).collect();
    let energy = model.hamiltonian(&q1, &d.d4)?;
    let next = ExtendedState::new(state.t + h, q1, d.d4, energy);
    let record = StepRecord {
        h: h.as_f64(),
        residual: inf_norm(&sys.residual(&v)?).as_f64(),
        newton_iters: rep.iterations,
        delta_a: None,
        condition: rep.condition_estimate,
        retried: false,
    };
    Ok((next, record))
}

/// Fixed-step midpoint run until `t >= t_final`; energies are `H(q_k, p_k)`.
pub fn midpoint_fixed_run<S: Real>(
    model: &LagrangianModel,
    state0: &ExtendedState<S>,
    h: S,
    t_final: S,
    cfg: &SolverConfig,
) -> Result<Trajectory<S>, RunAborted<S>> {
    let mut s0 = state0.clone();
    let mut traj = Trajectory::new(s0.clone());
    match model.hamiltonian(&s0.q, &s0.p) {
        Ok(e) => {
            s0.energy = e;
            traj.states[0].energy = e;
        }
        Err(e) => {
            return Err(RunAborted {
                step: 0,
                error: e.into(),
                partial: traj,
            });
        }
    }
    while traj.last().t < t_final {
        if traj.steps.len() >= DEFAULT_MAX_STEPS {
            return Err(RunAborted {
                step: traj.steps.len(),
                error: IntegratorError::StepLimit(DEFAULT_MAX_STEPS),
                partial: traj,
            });
        }
        match midpoint_fixed_step(model, traj.last(), h, cfg) {
            Ok((s, r)) => traj.push(s, r),
            Err(error) => {
                return Err(RunAborted {
                    step: traj.steps.len(),
                    error,
                    partial: traj,
                })
            }
        }
    }
    Ok(traj)
}
