use super::{IntegratorError, StepRecord, Trajectory};
use crate::models::{ExtendedState, LagrangianModel};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl Dopri5Options {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            h_init: None,
            max_steps: 2_000_000,
        }
    }
}

/// Dormand-Prince 5(4) coefficients converted once into the working type.
struct Tableau<S> {
    c: [S; 7],
    a: [[S; 6]; 7],
    e: [S; 7],
    d: [S; 7],
}

fn r<S: Real>(n: f64, d: f64) -> S {
    S::of(n) / S::of(d)
}

impl<S: Real> Tableau<S> {
    fn new() -> Self {
        let z = S::zero();
        Self {
            c: [z, r(1., 5.), r(3., 10.), r(4., 5.), r(8., 9.), S::one(), S::one()],
            a: [
                [z; 6],
                [r(1., 5.), z, z, z, z, z],
                [r(3., 40.), r(9., 40.), z, z, z, z],
                [r(44., 45.), r(-56., 15.), r(32., 9.), z, z, z],
                [
                    r(19372., 6561.),
                    r(-25360., 2187.),
                    r(64448., 6561.),
                    r(-212., 729.),
                    z,
                    z,
                ],
                [
                    r(9017., 3168.),
                    r(-355., 33.),
                    r(46732., 5247.),
                    r(49., 176.),
                    r(-5103., 18656.),
                    z,
                ],
                [
                    r(35., 384.),
                    z,
                    r(500., 1113.),
                    r(125., 192.),
                    r(-2187., 6784.),
                    r(11., 84.),
                ],
            ],
            e: [
                r(71., 57600.),
                z,
                r(-71., 16695.),
                r(71., 1920.),
                r(-17253., 339200.),
                r(22., 525.),
                r(-1., 40.),
            ],
            d: [
                r(-12715105075., 11282082432.),
                z,
                r(87487479700., 32700410799.),
                r(-10690763975., 1880347072.),
                r(701980252875., 199316789632.),
                r(-1453857185., 822651844.),
                r(69997945., 29380423.),
            ],
        }
    }
}

/// Piecewise quartic dense output over the accepted steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution<S> {
    pub t: Vec<S>,
    pub y: Vec<Vec<S>>,
    cont: Vec<[Vec<S>; 5]>,
}

impl<S: Real> DenseSolution<S> {
    pub fn start(&self) -> S {
        self.t[0]
    }

    pub fn end(&self) -> S {
        *self.t.last().expect("at least one node")
    }

    pub fn steps(&self) -> usize {
        self.cont.len()
    }

    /// Interpolated solution at `t`, exact at the nodes.
    pub fn eval(&self, t: S) -> Result<Vec<S>, IntegratorError> {
        let (start, end) = (self.start(), self.end());
        if t < start || t > end || !t.is_finite() {
            return Err(IntegratorError::OutOfSpan {
                t: t.as_f64(),
                start: start.as_f64(),
                end: end.as_f64(),
            });
        }
        if self.cont.is_empty() {
            return Ok(self.y[0].clone());
        }
        // last segment whose left node is <= t
        let i = self
            .t
            .partition_point(|&x| x <= t)
            .saturating_sub(1)
            .min(self.cont.len() - 1);
        if t == self.t[i] {
            return Ok(self.y[i].clone());
        }
        let h = self.t[i + 1] - self.t[i];
        let th = (t - self.t[i]) / h;
        let th1 = S::one() - th;
        let [r1, r2, r3, r4, r5] = &self.cont[i];
        Ok((0..r1.len())
            .map(|j| r1[j] + th * (r2[j] + th1 * (r3[j] + th * (r4[j] + th1 * r5[j]))))
            .collect())
    }
}

fn err_norm<S: Real>(err: &[S], y0: &[S], y1: &[S], rtol: S, atol: S) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = (0..err.len())
        .map(|i| {
            let sk = atol + rtol * y0[i].abs().max(y1[i].abs());
            (err[i] / sk).as_f64().powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn axpy<S: Real>(y: &[S], h: S, terms: &[(S, &Vec<S>)]) -> Vec<S> {
    (0..y.len())
        .map(|j| {
            let acc: S = terms.iter().map(|(c, k)| *c * k[j]).sum();
            y[j] + h * acc
        })
        .collect()
}

/// Adaptive Dormand-Prince 5(4) with Hairer's step control and dense output.
pub fn dopri5<S, F>(f: F, t0: S, y0: &[S], t1: S, opts: &Dopri5Options) -> Result<DenseSolution<S>, IntegratorError>
where
    S: Real,
    F: Fn(S, &[S]) -> Result<Vec<S>, IntegratorError>,
{
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(IntegratorError::Invalid("tolerances must be positive".into()));
    }
    if t1 < t0 {
        return Err(IntegratorError::Invalid("integration must run forward in time".into()));
    }
    let tab = Tableau::<S>::new();
    let (rtol, atol) = (S::of(opts.rtol), S::of(opts.atol));
    let mut sol = DenseSolution {
        t: vec![t0],
        y: vec![y0.to_vec()],
        cont: Vec::new(),
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = f(t, &y)?;

    let mut h = match opts.h_init {
        Some(h) => S::of(h),
        None => {
            let zeros = vec![S::zero(); y.len()];
            let d0 = err_norm(&y, &zeros, &zeros, rtol, atol);
            let d1 = err_norm(&k1, &y, &y, rtol, atol);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            let h0 = S::of(h0).min(span);
            let y1 = axpy(&y, h0, &[(S::one(), &k1)]);
            let f1 = f(t + h0, &y1)?;
            let diff: Vec<S> = f1.iter().zip(&k1).map(|(&a, &b)| (a - b) / h0).collect();
            let d2 = err_norm(&diff, &y, &y, rtol, atol);
            let m = d1.max(d2);
            let h1 = if m <= 1e-15 {
                (h0.as_f64() * 1e-3).max(1e-6)
            } else {
                (0.01 / m).powf(0.2)
            };
            (h0 * 100.0).min(S::of(h1))
        }
    };
    let mut last_rejected = false;

    loop {
        if sol.cont.len() >= opts.max_steps {
            return Err(IntegratorError::StepLimit(opts.max_steps));
        }
        let remaining = t1 - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h.abs().as_f64() <= 10.0 * S::epsilon().as_f64() * (1.0 + t.abs().as_f64()) {
            return Err(IntegratorError::StepUnderflow {
                t: t.as_f64(),
                h: h.as_f64(),
            });
        }
        let mut k: Vec<Vec<S>> = Vec::with_capacity(7);
        k.push(k1.clone());
        for s in 1..7 {
            let terms: Vec<(S, &Vec<S>)> = (0..s).map(|j| (tab.a[s][j], &k[j])).collect();
            let ys = axpy(&y, h, &terms);
            let ks = f(t + tab.c[s] * h, &ys)?;
            if ks.iter().any(|v| !v.is_finite()) {
                return Err(IntegratorError::StepUnderflow {
                    t: t.as_f64(),
                    h: h.as_f64(),
                });
            }
            k.push(ks);
        }
        // stage 7 is evaluated at the new solution (FSAL)
        let terms: Vec<(S, &Vec<S>)> = (0..6).map(|j| (tab.a[6][j], &k[j])).collect();
        let y_new = axpy(&y, h, &terms);
        let err: Vec<S> = (0..y.len())
            .map(|j| h * (0..7).map(|s| tab.e[s] * k[s][j]).sum::<S>())
            .collect();
        let en = err_norm(&err, &y, &y_new, rtol, atol);
        if !en.is_finite() {
            h = h * 0.2;
            last_rejected = true;
            continue;
        }
        if en <= 1.0 {
            let r2: Vec<S> = y_new.iter().zip(&y).map(|(&a, &b)| a - b).collect();
            let r3: Vec<S> = (0..y.len()).map(|j| h * k[0][j] - r2[j]).collect();
            let r4: Vec<S> = (0..y.len()).map(|j| r2[j] - h * k[6][j] - r3[j]).collect();
            let r5: Vec<S> = (0..y.len())
                .map(|j| h * (0..7).map(|s| tab.d[s] * k[s][j]).sum::<S>())
                .collect();
            sol.cont.push([y.clone(), r2, r3, r4, r5]);
            t = if last { t1 } else { t + h };
            y = y_new;
            k1 = k.swap_remove(6);
            sol.t.push(t);
            sol.y.push(y.clone());
            if last {
                return Ok(sol);
            }
            let mut fac = (0.9 * en.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = h * fac;
            last_rejected = false;
        } else {
            let fac = (0.9 * en.powf(-0.2)).max(0.2);
            h = h * fac;
            last_rejected = true;
        }
    }
}

/// High-accuracy solution of Hamilton's equations, packed as `[q..., p...]`.
pub fn reference_solve<S: Real>(
    model: &LagrangianModel,
    state0: &ExtendedState<S>,
    t_final: S,
    rtol: f64,
    atol: f64,
) -> Result<DenseSolution<S>, IntegratorError> {
    let mut y0 = state0.q.clone();
    y0.extend_from_slice(&state0.p);
    dopri5(
        |_t, y: &[S]| Ok(model.hamilton_rhs(y)?),
        state0.t,
        &y0,
        t_final,
        &Dopri5Options::new(rtol, atol),
    )
}

impl<S: Real> DenseSolution<S> {
    /// Node values as a trajectory of Hamiltonian states.
    pub fn to_trajectory(&self, model: &LagrangianModel) -> Result<Trajectory<S>, IntegratorError> {
        let n = model.dim();
        let state = |i: usize| -> Result<ExtendedState<S>, IntegratorError> {
            let (q, p) = self.y[i].split_at(n);
            Ok(ExtendedState::from_model(model, self.t[i], q.to_vec(), p.to_vec())?)
        };
        let mut traj = Trajectory::new(state(0)?);
        for i in 1..self.t.len() {
            let rec = StepRecord {
                h: (self.t[i] - self.t[i - 1]).as_f64(),
                residual: 0.0,
                newton_iters: 0,
                delta_a: None,
                condition: 1.0,
                retried: false,
            };
            traj.push(state(i)?, rec);
        }
        Ok(traj)
    }
}
