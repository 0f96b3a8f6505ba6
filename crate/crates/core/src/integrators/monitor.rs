use super::IntegratorError;
use crate::linalg::dot;
use crate::models::LagrangianModel;
use crate::scalar::Real;

/// Monitor function `g(q) = dt/da` of the time transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonitorFn {
    /// Arclength parametrization with the captured initial energy.
    Arclength {
        h0: f64,
    },
    /// `q^T q`.
    Kepler,
    Unit,
}

impl MonitorFn {
    pub fn name(&self) -> &'static str {
        match self {
            MonitorFn::Arclength { .. } => "g1",
            MonitorFn::Kepler => "g2",
            MonitorFn::Unit => "unit",
        }
    }

    pub fn value<S: Real>(&self, model: &LagrangianModel, q: &[S]) -> Result<S, IntegratorError> {
        let g = match *self {
            MonitorFn::Arclength { h0 } => monitor_arclength(model, q, S::of(h0))?,
            MonitorFn::Kepler => monitor_kepler(q),
            MonitorFn::Unit => S::one(),
        };
        if !(g > S::zero()) || !g.is_finite() {
            return Err(IntegratorError::MonitorDomain(g.as_f64()));
        }
        Ok(g)
    }
}

/// `(2 (H0 - V) + grad V^T M^-1 grad V)^(-1/2)`.
pub fn monitor_arclength<S: Real>(model: &LagrangianModel, q: &[S], h0: S) -> Result<S, IntegratorError> {
    let grad = model.grad(q)?;
    let rad = (h0 - model.potential(q)?) * 2.0 + dot(&grad, &model.mass_inv_mul(&grad));
    if !(rad > S::zero()) {
        return Err(IntegratorError::MonitorDomain(rad.as_f64()));
    }
    Ok(rad.sqrt().recip())
}

pub fn monitor_kepler<S: Real>(q: &[S]) -> S {
    dot(q, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arclength_at_perihelion() {
        let m = LagrangianModel::kepler();
        let g = monitor_arclength(&m, &[0.3, 0.0], -0.5).unwrap();
        let want = (2.0 * (-0.5 + 10.0 / 3.0) + (0.3f64 / 0.027).powi(2)).powf(-0.5);
        assert!((g - want).abs() < 1e-15);
        assert!((g - 0.0880).abs() < 5e-5);
    }

    #[test]
    fn arclength_free_particle_is_unit() {
        let free = LagrangianModel::free(2);
        assert_eq!(monitor_arclength(&free, &[0.3, 1.0], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn arclength_zero_radicand_is_an_error() {
        let free = LagrangianModel::free(1);
        assert!(matches!(
            monitor_arclength(&free, &[2.0], 0.0),
            Err(IntegratorError::MonitorDomain(_))
        ));
    }

    #[test]
    fn kepler_monitor_values() {
        assert_eq!(monitor_kepler(&[1.0, 0.0]), 1.0);
        assert!((monitor_kepler(&[0.3, 0.0]) - 0.09).abs() < 1e-16);
        assert_eq!(monitor_kepler(&[0.0, 0.0]), 0.0);
        let m = LagrangianModel::free(2);
        assert!(MonitorFn::Kepler.value(&m, &[0.0, 0.0]).is_err());
    }
}
