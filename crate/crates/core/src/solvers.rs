//! Damped Newton iteration for the implicit per-step equations.

use thiserror::Error;

use crate::linalg::{condition_1, inf_norm, Matrix};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("Newton did not converge in {iterations} iterations (best residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("ill-posed step: Jacobian is singular or numerically singular (condition estimate {condition:e})")]
    IllPosed { condition: f64 },
    #[error("residual evaluation failed: {0}")]
    Domain(String),
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Tolerance on the infinity norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative finite-difference step; `None` uses `eps^(1/3)`.
    pub fd_step: Option<f64>,
    /// Condition estimates above this are flagged in the report.
    pub condition_warn: f64,
    /// Extra Newton iterations taken after convergence while they still
    /// reduce the residual.
    pub polish: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            fd_step: None,
            condition_warn: 1e10,
            polish: 10,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tol > 0.0) {
            return Err(SolverError::Config(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(SolverError::Config("max_iter must be at least 1".into()));
        }
        if let Some(d) = self.fd_step {
            if !(d > 0.0) {
                return Err(SolverError::Config(format!("fd_step = {d} must be positive")));
            }
        }
        Ok(())
    }

    pub fn fd_step_for<S: Real>(&self) -> f64 {
        self.fd_step.unwrap_or_else(|| S::epsilon().as_f64().cbrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<S> {
    pub solution: Vec<S>,
    pub residual_norm: S,
    pub iterations: usize,
    /// 1-norm condition number of the Jacobian at the solution.
    pub condition_estimate: f64,
    pub ill_conditioned: bool,
}

/// A square nonlinear system `F(x) = 0`.
pub trait NonlinearSystem<S: Real> {
    fn residual(&self, x: &[S]) -> Result<Vec<S>, SolverError>;

    /// Analytic Jacobian, if available.
    fn jacobian(&self, _x: &[S]) -> Option<Result<Matrix<S>, SolverError>> {
        None
    }
}

/// Adapts a closure into a system with finite-difference Jacobian.
pub struct FnSystem<F>(pub F);

impl<S, F> NonlinearSystem<S> for FnSystem<F>
where
    S: Real,
    F: Fn(&[S]) -> Result<Vec<S>, SolverError>,
{
    fn residual(&self, x: &[S]) -> Result<Vec<S>, SolverError> {
        (self.0)(x)
    }
}

fn eval<S: Real>(sys: &impl NonlinearSystem<S>, x: &[S]) -> Result<Vec<S>, SolverError> {
    let f = sys.residual(x)?;
    if f.iter().all(|v| v.is_finite()) {
        Ok(f)
    } else {
        Err(SolverError::Domain("non-finite residual".into()))
    }
}

/// Central-difference Jacobian with absolute step `fd_step` in every coordinate.
pub fn fd_jacobian<S, F>(f: F, x: &[S], fd_step: S) -> Result<Matrix<S>, SolverError>
where
    S: Real,
    F: Fn(&[S]) -> Result<Vec<S>, SolverError>,
{
    fd_jacobian_steps(&f, x, &vec![fd_step; x.len()])
}

fn fd_jacobian_steps<S, F>(f: &F, x: &[S], steps: &[S]) -> Result<Matrix<S>, SolverError>
where
    S: Real,
    F: Fn(&[S]) -> Result<Vec<S>, SolverError>,
{
    let mut jac: Option<Matrix<S>> = None;
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let d = steps[j];
        xp[j] = x[j] + d;
        let fp = f(&xp)?;
        xp[j] = x[j] - d;
        let fm = f(&xp)?;
        xp[j] = x[j];
        if fp.iter().chain(&fm).any(|v| !v.is_finite()) {
            return Err(SolverError::Domain(
                "non-finite residual in finite-difference stencil".into(),
            ));
        }
        let jac = jac.get_or_insert_with(|| Matrix::zeros(fp.len(), x.len()));
        let width = d * 2.0;
        for i in 0..fp.len() {
            jac[(i, j)] = (fp[i] - fm[i]) / width;
        }
    }
    Ok(jac.unwrap_or_else(|| Matrix::zeros(0, 0)))
}

fn jacobian_at<S: Real>(sys: &impl NonlinearSystem<S>, x: &[S], cfg: &SolverConfig) -> Result<Matrix<S>, SolverError> {
    if let Some(j) = sys.jacobian(x) {
        return j;
    }
    let rel = cfg.fd_step_for::<S>();
    let steps: Vec<S> = x.iter().map(|&xi| (xi.abs() + 1.0) * rel).collect();
    fd_jacobian_steps(&|y: &[S]| sys.residual(y), x, &steps)
}

fn newton_direction<S: Real>(jac: &Matrix<S>, f: &[S]) -> Result<Vec<S>, SolverError> {
    let lu = jac.lu().ok_or(SolverError::IllPosed {
        condition: f64::INFINITY,
    })?;
    let neg: Vec<S> = f.iter().map(|&v| -v).collect();
    Ok(lu.solve(&neg))
}

fn nonconvergence<S: Real>(iterations: usize, best: &[S], norm: S) -> SolverError {
    SolverError::NonConvergence {
        iterations,
        residual: norm.as_f64(),
        best: best.iter().map(|v| v.as_f64()).collect(),
    }
}

/// Newton's method with up to 10 step halvings when the residual grows.
///
/// Fails with [`SolverError::IllPosed`] when the Jacobian at the final iterate
/// is singular to working precision, even if the residual already vanishes.
pub fn newton_solve<S: Real>(
    sys: &impl NonlinearSystem<S>,
    x0: &[S],
    cfg: &SolverConfig,
) -> Result<SolveReport<S>, SolverError> {
    cfg.validate()?;
    let tol = S::of(cfg.tol);
    let mut x = x0.to_vec();
    let mut f = eval(sys, &x)?;
    let mut norm = inf_norm(&f);
    let mut iterations = 0;

    while !(norm <= tol) {
        if iterations >= cfg.max_iter {
            return Err(nonconvergence(iterations, &x, norm));
        }
        let jac = jacobian_at(sys, &x, cfg)?;
        let dx = newton_direction(&jac, &f)?;
        let mut lambda = S::one();
        let mut accepted = None;
        for _ in 0..=10 {
            let trial: Vec<S> = x.iter().zip(&dx).map(|(&a, &d)| a + d * lambda).collect();
            if let Ok(ft) = eval(sys, &trial) {
                let nt = inf_norm(&ft);
                if nt < norm {
                    accepted = Some((trial, ft, nt));
                    break;
                }
            }
            lambda = lambda * 0.5;
        }
        iterations += 1;
        match accepted {
            Some((xn, fnew, nn)) => {
                x = xn;
                f = fnew;
                norm = nn;
            }
            None => return Err(nonconvergence(iterations, &x, norm)),
        }
    }

    for _ in 0..cfg.polish {
        if norm == S::zero() {
            break;
        }
        let Ok(jac) = jacobian_at(sys, &x, cfg) else { break };
        let Ok(dx) = newton_direction(&jac, &f) else { break };
        let trial: Vec<S> = x.iter().zip(&dx).map(|(&a, &d)| a + d).collect();
        match eval(sys, &trial) {
            Ok(ft) if inf_norm(&ft) < norm => {
                norm = inf_norm(&ft);
                f = ft;
                x = trial;
                iterations += 1;
            }
            _ => break,
        }
    }

    let jac = jacobian_at(sys, &x, cfg)?;
    let condition = condition_1(&jac);
    if !(condition * S::epsilon().as_f64() < 1.0) {
        return Err(SolverError::IllPosed { condition });
    }
    Ok(SolveReport {
        solution: x,
        residual_norm: norm,
        iterations,
        condition_estimate: condition,
        ill_conditioned: condition > cfg.condition_warn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::DoubleDouble;

    fn quad(x: &[f64]) -> Result<Vec<f64>, SolverError> {
        Ok(vec![x[0] * x[0] - 4.0])
    }

    #[test]
    fn scalar_quadratic() {
        let r = newton_solve(&FnSystem(quad), &[3.0], &SolverConfig::default()).unwrap();
        assert!((r.solution[0] - 2.0).abs() < 1e-12);
        assert!(r.residual_norm <= 1e-12);
    }

    #[test]
    fn identity_root_needs_no_iterations() {
        let r = newton_solve(&FnSystem(|x: &[f64]| Ok(vec![x[0]])), &[0.0], &SolverConfig::default()).unwrap();
        assert_eq!(r.solution[0], 0.0);
        assert!(r.iterations <= 1);
    }

    #[test]
    fn singular_jacobian_is_ill_posed() {
        // second unknown never enters the residual
        let sys = FnSystem(|x: &[f64]| Ok(vec![x[0], 0.5 * x[0] * x[0]]));
        let err = newton_solve(&sys, &[0.0, 0.1], &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, SolverError::IllPosed { .. }));
    }

    #[test]
    fn nonconvergence_carries_best_iterate() {
        let sys = FnSystem(|x: &[f64]| Ok(vec![x[0] * x[0] + 1.0]));
        let cfg = SolverConfig {
            max_iter: 5,
            ..SolverConfig::default()
        };
        match newton_solve(&sys, &[1.0], &cfg).unwrap_err() {
            SolverError::NonConvergence { best, residual, .. } => {
                assert_eq!(best.len(), 1);
                assert!(residual >= 1.0);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SolverConfig {
            tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(matches!(
            newton_solve(&FnSystem(quad), &[3.0], &cfg),
            Err(SolverError::Config(_))
        ));
    }

    #[test]
    fn fd_jacobian_of_linear_and_square() {
        let j = fd_jacobian(|x: &[f64]| Ok(vec![x[0], x[1]]), &[0.3, -2.0], 1e-5).unwrap();
        assert!((j[(0, 0)] - 1.0).abs() < 1e-10 && (j[(1, 1)] - 1.0).abs() < 1e-10);
        assert!(j[(0, 1)].abs() < 1e-10 && j[(1, 0)].abs() < 1e-10);
        let j = fd_jacobian(quad, &[3.0], 1e-4).unwrap();
        assert!((j[(0, 0)] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn fd_jacobian_propagates_domain_errors() {
        let f = |x: &[f64]| Ok(vec![x[0].ln()]);
        assert!(matches!(fd_jacobian(f, &[0.0], 1e-3), Err(SolverError::Domain(_))));
    }

    #[test]
    fn works_in_double_double() {
        let sys = FnSystem(|x: &[DoubleDouble]| Ok(vec![x[0] * x[0] - 2.0]));
        let cfg = SolverConfig {
            tol: 1e-30,
            ..SolverConfig::default()
        };
        let r = newton_solve(&sys, &[DoubleDouble::of(1.5)], &cfg).unwrap();
        let err = (r.solution[0] - DoubleDouble::of(2.0).sqrt()).abs().as_f64();
        assert!(err < 1e-30);
    }

    #[test]
    fn solver_is_pure() {
        let sys = FnSystem(|x: &[f64]| Ok(vec![x[0] * x[0] + x[1] * x[1] - 1.0, x[0].sin() - x[1] - 0.2]));
        let a = newton_solve(&sys, &[0.5, 0.5], &SolverConfig::default()).unwrap();
        let b = newton_solve(&sys, &[0.5, 0.5], &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn quadratic_convergence_near_root(r0 in 0.5..3.0f64, r1 in -3.0..-0.5f64, s0 in -0.1..0.1f64, s1 in -0.1..0.1f64) {
            // F(x) = (x0^2 - r0^2, x0 x1 - r0 r1) has the root (r0, r1)
            let sys = FnSystem(move |x: &[f64]| Ok(vec![x[0] * x[0] - r0 * r0, x[0] * x[1] - r0 * r1]));
            let cfg = SolverConfig { polish: 0, ..SolverConfig::default() };
            let rep = newton_solve(&sys, &[r0 * (1.0 + s0), r1 * (1.0 + s1)], &cfg).unwrap();
            prop_assert!(rep.iterations <= 8);
            prop_assert!((rep.solution[0] - r0).abs() < 1e-10);
        }
    }
}
