//! Backward error analysis for the midpoint discretization in a transformed
//! time `a`, with `t = t(a)` prescribed: discrete residuals, the second-order
//! modified equation and modified Lagrangians for 1-DOF separable systems,
//! and numerical order estimates.

use rayon::prelude::*;
use thiserror::Error;

use crate::integrators::{discrete_partials_midpoint, dopri5, reference_solve, Dopri5Options, IntegratorError};
use crate::models::{ExtendedState, LagrangianModel, ModelError};
use crate::scalar::{convert, DoubleDouble, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeaError {
    #[error("invalid jet: {0}")]
    InvalidJet(String),
    #[error("model must have one degree of freedom")]
    NotOneDof,
    #[error("time profile is not monotone at a = {0}")]
    NonMonotoneProfile(f64),
    #[error("need at least 4 strictly decreasing step sizes")]
    StepList,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
}

/// Local data `(q, q', t', t'', t''')` in the transformed time, with step `delta_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet1D<S> {
    pub q: S,
    pub dq: S,
    pub dt: S,
    pub ddt: S,
    pub dddt: S,
    pub delta_a: S,
}

impl<S: Real> Jet1D<S> {
    pub fn validate(&self) -> Result<(), BeaError> {
        if !(self.dt > S::zero()) {
            return Err(BeaError::InvalidJet(format!(
                "t' = {:e} must be positive",
                self.dt.as_f64()
            )));
        }
        if self.delta_a < S::zero() {
            return Err(BeaError::InvalidJet("delta_a must be non-negative".into()));
        }
        Ok(())
    }
}

/// Analytic time map `a -> t(a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    /// `t = scale * a`.
    Linear { scale: f64 },
    /// `t = a + c sin a`, monotone for `|c| < 1`.
    Sine { c: f64 },
}

impl TimeProfile {
    pub fn identity() -> Self {
        TimeProfile::Linear { scale: 1.0 }
    }

    /// `[t, t', t'', t''']` at `a`.
    pub fn eval<S: Real>(&self, a: S) -> [S; 4] {
        match *self {
            TimeProfile::Linear { scale } => [a * scale, S::of(scale), S::zero(), S::zero()],
            TimeProfile::Sine { c } => {
                let (s, co) = (a.sin(), a.cos());
                [a + s * c, co * c + 1.0, -(s * c), -(co * c)]
            }
        }
    }

    pub fn check_monotone(&self, a0: f64, a1: f64) -> Result<(), BeaError> {
        let valid = match *self {
            TimeProfile::Linear { scale } => scale > 0.0,
            TimeProfile::Sine { c } => c.abs() < 1.0,
        };
        if valid {
            return Ok(());
        }
        // report the first offending sample
        let bad = (0..=1000)
            .map(|i| a0 + (a1 - a0) * i as f64 / 1000.0)
            .find(|&a| !(self.eval(a)[1] > 0.0))
            .unwrap_or(a0);
        Err(BeaError::NonMonotoneProfile(bad))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair<S> {
    pub psi_el: Vec<S>,
    pub psi_e: S,
}

/// Residuals of the discrete Euler-Lagrange and energy equations at the
/// middle of three consecutive points. The fictitious step cancels from the
/// midpoint discrete Lagrangian, so only physical times enter.
pub fn discrete_residual<S: Real>(
    model: &LagrangianModel,
    prev: (S, &[S]),
    mid: (S, &[S]),
    next: (S, &[S]),
) -> Result<ResidualPair<S>, IntegratorError> {
    let a = discrete_partials_midpoint(model, prev.0, prev.1, mid.0, mid.1)?;
    let b = discrete_partials_midpoint(model, mid.0, mid.1, next.0, next.1)?;
    Ok(ResidualPair {
        psi_el: a.d4.iter().zip(&b.d2).map(|(&x, &y)| x + y).collect(),
        psi_e: a.d3 + b.d1,
    })
}

fn one_dof_mass(model: &LagrangianModel) -> Result<f64, BeaError> {
    model.scalar_mass().ok_or(BeaError::NotOneDof)
}

/// Leading-order transformed equation `q'' = q' t''/t' - t'^2 V_q / m`.
fn leading_rhs<S: Real>(m: f64, vq: S, dq: S, dt: S, ddt: S) -> S {
    dq * ddt / dt - dt * dt * vq / m
}

/// Second-order modified equation solved for `q''`.
pub fn modified_rhs_order2<S: Real>(model: &LagrangianModel, jet: &Jet1D<S>) -> Result<S, BeaError> {
    jet.validate()?;
    let m = one_dof_mass(model)?;
    let [_, vq, vqq, vqqq] = model.derivs_1d(jet.q)?;
    let Jet1D {
        dq, dt, ddt, delta_a, ..
    } = *jet;
    let dt2 = dt * dt;
    let corr = dt2 * dt2 * vq * vqq * (4.0 / m) - dq * dt * ddt * vqq * 4.0 - dq * dq * dt2 * vqqq;
    Ok(leading_rhs(m, vq, dq, dt, ddt) + delta_a * delta_a / (24.0 * m) * corr)
}

/// Truncated modified Lagrangian through the `delta_a^2` term.
pub fn modified_lagrangian_mod3<S: Real>(
    model: &LagrangianModel,
    q: S,
    dq: S,
    dt: S,
    delta_a: S,
) -> Result<S, BeaError> {
    if !(dt > S::zero()) {
        return Err(BeaError::InvalidJet("t' must be positive".into()));
    }
    let m = one_dof_mass(model)?;
    let [v, vq, vqq, _] = model.derivs_1d(q)?;
    let vel = dq / dt;
    let lead = dt * (vel * vel * (0.5 * m) - v);
    let corr = dt * dt * dt * vq * vq / m + dq * dq * dt * vqq;
    Ok(lead + delta_a * delta_a / 24.0 * corr)
}

/// Jet with the second derivative of the path, for the meshed Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshedJet<S> {
    pub q: S,
    pub dq: S,
    pub ddq: S,
    pub dt: S,
    pub ddt: S,
    pub delta_a: S,
}

/// Meshed modified Lagrangian through the `delta_a^2` term.
pub fn meshed_lagrangian_order2<S: Real>(model: &LagrangianModel, jet: &MeshedJet<S>) -> Result<S, BeaError> {
    let MeshedJet {
        q,
        dq,
        ddq,
        dt,
        ddt,
        delta_a,
    } = *jet;
    if !(dt > S::zero()) {
        return Err(BeaError::InvalidJet("t' must be positive".into()));
    }
    let m = one_dof_mass(model)?;
    let [v, vq, vqq, _] = model.derivs_1d(q)?;
    let vel = dq / dt;
    let lead = dt * (vel * vel * (0.5 * m) - v);
    let dt2 = dt * dt;
    let corr = -(ddq * ddq * m / dt) + dq * ddq * ddt * (2.0 * m) / dt2 - dq * dq * ddt * ddt * m / (dt2 * dt)
        + dq * ddt * vq * 2.0
        + dq * dq * dt * vqq
        - ddq * dt * vq * 2.0;
    Ok(lead + delta_a * delta_a / 24.0 * corr)
}

/// Settings for [`residual_order_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderStudy {
    pub q0: f64,
    pub dq0: f64,
    /// Window `[0, a_end]` in the transformed time.
    pub a_end: f64,
    pub samples: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for OrderStudy {
    fn default() -> Self {
        Self {
            q0: 1.0,
            dq0: 0.0,
            a_end: 4.0,
            samples: 10,
            rtol: 1e-20,
            atol: 1e-22,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub slope: f64,
    /// `(delta_a, max |psi_EL|, max |psi_E|)` per step size.
    pub points: Vec<(f64, f64, f64)>,
    /// Largest `|q'/t'|` seen at the sample points.
    pub max_velocity: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

type Dd = DoubleDouble;

fn residual_norms(
    model: &LagrangianModel,
    profile: TimeProfile,
    use_modified: bool,
    delta_a: f64,
    study: &OrderStudy,
) -> Result<(f64, f64, f64), BeaError> {
    let m = one_dof_mass(model)?;
    let da = Dd::of(delta_a);
    let rhs = |a: Dd, y: &[Dd]| -> Result<Vec<Dd>, IntegratorError> {
        let [_, dt, ddt, dddt] = profile.eval(a);
        let qdd = if use_modified {
            let jet = Jet1D {
                q: y[0],
                dq: y[1],
                dt,
                ddt,
                dddt,
                delta_a: da,
            };
            modified_rhs_order2(model, &jet).map_err(|e| IntegratorError::Invalid(e.to_string()))?
        } else {
            let vq = model.grad(&[y[0]])?[0];
            leading_rhs(m, vq, y[1], dt, ddt)
        };
        Ok(vec![y[1], qdd])
    };
    let sol = dopri5(
        rhs,
        Dd::of(0.0),
        &[Dd::of(study.q0), Dd::of(study.dq0)],
        Dd::of(study.a_end),
        &Dopri5Options::new(study.rtol, study.atol),
    )?;
    let lo = 2.0 * delta_a;
    let hi = study.a_end - 2.0 * delta_a;
    let (mut el, mut en, mut vmax) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..study.samples {
        let a = lo + (hi - lo) * (i as f64 + 0.5) / study.samples as f64;
        let pts: Vec<(Dd, Vec<Dd>)> = [a - delta_a, a, a + delta_a]
            .iter()
            .map(|&x| {
                let ad = Dd::of(x);
                sol.eval(ad).map(|y| (profile.eval(ad)[0], y))
            })
            .collect::<Result<_, _>>()?;
        let r = discrete_residual(
            model,
            (pts[0].0, &pts[0].1[..1]),
            (pts[1].0, &pts[1].1[..1]),
            (pts[2].0, &pts[2].1[..1]),
        )?;
        el = el.max(r.psi_el[0].abs().as_f64());
        en = en.max(r.psi_e.abs().as_f64());
        let dt = profile.eval(Dd::of(a))[1];
        vmax = vmax.max((pts[1].1[1] / dt).abs().as_f64());
    }
    Ok((el, en, vmax))
}

/// Slope of `max |psi_EL|` against `delta_a` on solutions of the leading-order
/// (`use_modified = false`) or second-order modified equation.
///
/// Solves run in double-double arithmetic so that solution error stays far
/// below the smallest residual.
pub fn residual_order_estimate(
    model: &LagrangianModel,
    profile: TimeProfile,
    use_modified: bool,
    delta_as: &[f64],
    study: &OrderStudy,
) -> Result<OrderEstimate, BeaError> {
    if delta_as.len() < 4 || delta_as.windows(2).any(|w| !(w[1] < w[0])) || delta_as.iter().any(|&d| !(d > 0.0)) {
        return Err(BeaError::StepList);
    }
    one_dof_mass(model)?;
    profile.check_monotone(0.0, study.a_end)?;
    let results: Vec<(f64, f64, f64)> = delta_as
        .par_iter()
        .map(|&d| residual_norms(model, profile, use_modified, d, study))
        .collect::<Result<_, _>>()?;
    let norms: Vec<f64> = results.iter().map(|r| r.0).collect();
    Ok(OrderEstimate {
        slope: log_log_slope(delta_as, &norms),
        points: delta_as.iter().zip(&results).map(|(&d, r)| (d, r.0, r.1)).collect(),
        max_velocity: results.iter().map(|r| r.2).fold(0.0, f64::max),
    })
}

/// Difference between the second-order modified oscillator frequency and the
/// exact frequency of the midpoint map, `(2/da atan(w da / 2))^2`.
pub fn modified_frequency_defect(k: f64, m: f64, delta_a: f64) -> f64 {
    let w = (k / m).sqrt();
    let series = k / m * (1.0 - delta_a * delta_a * k / (6.0 * m));
    let exact = (2.0 / delta_a * (w * delta_a / 2.0).atan()).powi(2);
    (series - exact).abs()
}

/// Integrates the transformed Euler-Lagrange equation in `a` with prescribed
/// `t(a)` and returns the largest deviation of `q(a)` from the physical
/// solution at `t(a) - t(0)` over `[0, a_end]`.
pub fn reparametrization_check(
    model: &LagrangianModel,
    profile: TimeProfile,
    state0: &ExtendedState<f64>,
    a_end: f64,
    rtol: f64,
    atol: f64,
) -> Result<f64, BeaError> {
    profile.check_monotone(0.0, a_end)?;
    let n = model.dim();
    let t_of = |a: f64| profile.eval(a);
    let alpha_end = t_of(a_end)[0] - t_of(0.0)[0];
    let reference = reference_solve(model, state0, state0.t + alpha_end, rtol, atol)?;

    let mut y0 = state0.q.clone();
    y0.extend(model.mass_inv_mul(&state0.p).iter().map(|&v| v * t_of(0.0)[1]));
    let rhs = |a: f64, y: &[f64]| -> Result<Vec<f64>, IntegratorError> {
        let [_, dt, ddt, _] = t_of(a);
        let (q, dq) = y.split_at(n);
        let force = model.mass_inv_mul(&model.grad(q)?);
        let mut out = dq.to_vec();
        out.extend((0..n).map(|i| dq[i] * ddt / dt - dt * dt * force[i]));
        Ok(out)
    };
    let sol = dopri5(rhs, 0.0, &y0, a_end, &Dopri5Options::new(rtol, atol))?;
    let mut dev = 0.0f64;
    let samples = 400;
    for i in 0..=samples {
        let a = a_end * i as f64 / samples as f64;
        let ya = sol.eval(a)?;
        let alpha = (t_of(a)[0] - t_of(0.0)[0]).clamp(0.0, alpha_end);
        let yt = reference.eval(state0.t + alpha)?;
        for j in 0..n {
            dev = dev.max((ya[j] - yt[j]).abs());
        }
    }
    Ok(dev)
}

/// Converts a jet between scalar types.
pub fn convert_jet<A: Real, B: Real>(j: &Jet1D<A>) -> Jet1D<B> {
    Jet1D {
        q: convert(j.q),
        dq: convert(j.dq),
        dt: convert(j.dt),
        ddt: convert(j.ddt),
        dddt: convert(j.dddt),
        delta_a: convert(j.delta_a),
    }
}
