//! Problem definitions: Kepler two-body and separable mechanical systems
//! `L(q, v) = v^T M v / 2 - V(q)` with constant mass matrix.

use thiserror::Error;

use crate::linalg::{dot, Matrix};
use crate::scalar::Real;

/// Distances below this are treated as a gravitational collision.
pub const KEPLER_COLLISION_RADIUS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("gravitational collision: |q| = {0:e} is below the collision guard")]
    Collision(f64),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("potential derivatives of order {order} are only available for n = 1 (model has n = {n})")]
    UnsupportedOrder { order: usize, n: usize },
    #[error("mass matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    /// `V = -1/|q|` in two dimensions.
    Kepler,
    /// `V = k |q|^2 / 2`; `k = 0` is the free particle.
    Oscillator { k: f64 },
    /// `V = -k cos q`, one degree of freedom.
    Pendulum { k: f64 },
}

/// Potential value and derivatives up to the requested order.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialDerivs<S> {
    pub value: S,
    pub grad: Option<Vec<S>>,
    pub hessian: Option<Matrix<S>>,
    /// Third derivative, only for one degree of freedom.
    pub third: Option<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianModel {
    name: &'static str,
    n: usize,
    mass: Matrix<f64>,
    diagonal_mass: bool,
    potential: Potential,
}

impl LagrangianModel {
    pub fn new(name: &'static str, mass: Matrix<f64>, potential: Potential) -> Result<Self, ModelError> {
        let n = mass.rows();
        if mass.cols() != n || n == 0 {
            return Err(ModelError::InvalidParameter(
                "mass matrix must be square and non-empty".into(),
            ));
        }
        if !mass.is_symmetric(0.0) || mass.cholesky().is_none() {
            return Err(ModelError::NotPositiveDefinite);
        }
        match potential {
            Potential::Kepler if n != 2 => {
                return Err(ModelError::Dimension { expected: 2, got: n });
            }
            Potential::Pendulum { .. } if n != 1 => {
                return Err(ModelError::Dimension { expected: 1, got: n });
            }
            Potential::Oscillator { k } | Potential::Pendulum { k } if !(k >= 0.0 && k.is_finite()) => {
                return Err(ModelError::InvalidParameter(format!(
                    "stiffness k = {k} must be finite and >= 0"
                )));
            }
            _ => {}
        }
        let diagonal_mass = (0..n).all(|i| (0..n).all(|j| i == j || mass[(i, j)] == 0.0));
        Ok(Self {
            name,
            n,
            mass,
            diagonal_mass,
            potential,
        })
    }

    pub fn kepler() -> Self {
        Self::new("kepler", Matrix::identity(2), Potential::Kepler).expect("kepler model")
    }

    pub fn oscillator(k: f64, m: f64) -> Result<Self, ModelError> {
        Self::new("oscillator", scalar_mass(m)?, Potential::Oscillator { k })
    }

    pub fn pendulum(k: f64, m: f64) -> Result<Self, ModelError> {
        Self::new("pendulum", scalar_mass(m)?, Potential::Pendulum { k })
    }

    /// Free particle of dimension `n` with identity mass.
    pub fn free(n: usize) -> Self {
        Self::new("free", Matrix::identity(n), Potential::Oscillator { k: 0.0 }).expect("free particle")
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn potential_kind(&self) -> Potential {
        self.potential
    }

    pub fn mass_matrix(&self) -> &Matrix<f64> {
        &self.mass
    }

    /// Scalar mass of a 1-DOF model.
    pub fn scalar_mass(&self) -> Option<f64> {
        (self.n == 1).then(|| self.mass[(0, 0)])
    }

    pub fn mass_mul<S: Real>(&self, v: &[S]) -> Vec<S> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| v[j] * self.mass[(i, j)]).sum())
            .collect()
    }

    pub fn mass_inv_mul<S: Real>(&self, p: &[S]) -> Vec<S> {
        if self.diagonal_mass {
            return p.iter().enumerate().map(|(i, &x)| x / self.mass[(i, i)]).collect();
        }
        let m = Matrix::from_rows(
            &(0..self.n)
                .map(|i| (0..self.n).map(|j| S::of(self.mass[(i, j)])).collect())
                .collect::<Vec<_>>(),
        );
        m.lu().expect("SPD mass matrix").solve(p)
    }

    pub fn mass_s<S: Real>(&self) -> Matrix<S> {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] = S::of(self.mass[(i, j)]);
            }
        }
        m
    }

    fn check_dim<S>(&self, q: &[S]) -> Result<(), ModelError> {
        if q.len() == self.n {
            Ok(())
        } else {
            Err(ModelError::Dimension {
                expected: self.n,
                got: q.len(),
            })
        }
    }

    fn kepler_radius<S: Real>(q: &[S]) -> Result<S, ModelError> {
        let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
        if !(r.as_f64() >= KEPLER_COLLISION_RADIUS) {
            return Err(ModelError::Collision(r.as_f64()));
        }
        Ok(r)
    }

    pub fn potential<S: Real>(&self, q: &[S]) -> Result<S, ModelError> {
        self.check_dim(q)?;
        Ok(match self.potential {
            Potential::Kepler => -Self::kepler_radius(q)?.recip(),
            Potential::Oscillator { k } => dot(q, q) * (0.5 * k),
            Potential::Pendulum { k } => -(q[0].cos() * k),
        })
    }

    pub fn grad<S: Real>(&self, q: &[S]) -> Result<Vec<S>, ModelError> {
        self.check_dim(q)?;
        Ok(match self.potential {
            Potential::Kepler => {
                let r = Self::kepler_radius(q)?;
                let r3 = r * r * r;
                q.iter().map(|&x| x / r3).collect()
            }
            Potential::Oscillator { k } => q.iter().map(|&x| x * k).collect(),
            Potential::Pendulum { k } => vec![q[0].sin() * k],
        })
    }

    pub fn hessian<S: Real>(&self, q: &[S]) -> Result<Matrix<S>, ModelError> {
        self.check_dim(q)?;
        let n = self.n;
        let mut h = Matrix::zeros(n, n);
        match self.potential {
            Potential::Kepler => {
                let r = Self::kepler_radius(q)?;
                let r2 = r * r;
                let r3 = r2 * r;
                for i in 0..n {
                    for j in 0..n {
                        let mut v = -(q[i] * q[j] * 3.0) / (r2 * r3);
                        if i == j {
                            v += r3.recip();
                        }
                        h[(i, j)] = v;
                    }
                }
            }
            Potential::Oscillator { k } => {
                for i in 0..n {
                    h[(i, i)] = S::of(k);
                }
            }
            Potential::Pendulum { k } => h[(0, 0)] = q[0].cos() * k,
        }
        Ok(h)
    }

    /// Exact derivatives of `V` up to `order` (0..=3). Order 3 needs n = 1.
    pub fn potential_derivs<S: Real>(&self, q: &[S], order: usize) -> Result<PotentialDerivs<S>, ModelError> {
        if order > 3 || (order == 3 && self.n != 1) {
            return Err(ModelError::UnsupportedOrder { order, n: self.n });
        }
        let value = self.potential(q)?;
        let grad = if order >= 1 { Some(self.grad(q)?) } else { None };
        let hessian = if order >= 2 { Some(self.hessian(q)?) } else { None };
        let third = if order == 3 {
            Some(match self.potential {
                Potential::Oscillator { .. } => S::zero(),
                Potential::Pendulum { k } => -(q[0].sin() * k),
                Potential::Kepler => unreachable!("kepler is two-dimensional"),
            })
        } else {
            None
        };
        Ok(PotentialDerivs {
            value,
            grad,
            hessian,
            third,
        })
    }

    /// `(V, V_q, V_qq, V_qqq)` for a 1-DOF model.
    pub fn derivs_1d<S: Real>(&self, q: S) -> Result<[S; 4], ModelError> {
        let d = self.potential_derivs(&[q], 3)?;
        Ok([
            d.value,
            d.grad.expect("order 3")[0],
            d.hessian.expect("order 3")[(0, 0)],
            d.third.expect("order 3"),
        ])
    }

    pub fn kinetic_velocity<S: Real>(&self, v: &[S]) -> S {
        dot(v, &self.mass_mul(v)) * 0.5
    }

    pub fn kinetic_momentum<S: Real>(&self, p: &[S]) -> S {
        dot(p, &self.mass_inv_mul(p)) * 0.5
    }

    pub fn lagrangian<S: Real>(&self, q: &[S], v: &[S]) -> Result<S, ModelError> {
        self.check_dim(v)?;
        Ok(self.kinetic_velocity(v) - self.potential(q)?)
    }

    pub fn hamiltonian<S: Real>(&self, q: &[S], p: &[S]) -> Result<S, ModelError> {
        self.check_dim(p)?;
        Ok(self.kinetic_momentum(p) + self.potential(q)?)
    }

    /// Right-hand side of Hamilton's equations, packed as `[q..., p...]`.
    pub fn hamilton_rhs<S: Real>(&self, y: &[S]) -> Result<Vec<S>, ModelError> {
        let (q, p) = y.split_at(self.n);
        let mut out = self.mass_inv_mul(p);
        out.extend(self.grad(q)?.into_iter().map(|g| -g));
        Ok(out)
    }
}

fn scalar_mass(m: f64) -> Result<Matrix<f64>, ModelError> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(ModelError::InvalidParameter(format!("mass m = {m} must be positive")));
    }
    Ok(Matrix::from_rows(&[vec![m]]))
}

/// One point `(t, q, p, E)` of an extended discrete trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedState<S> {
    pub t: S,
    pub q: Vec<S>,
    pub p: Vec<S>,
    pub energy: S,
}

impl<S: Real> ExtendedState<S> {
    pub fn new(t: S, q: Vec<S>, p: Vec<S>, energy: S) -> Self {
        Self { t, q, p, energy }
    }

    /// State with `E = H(q, p)`.
    pub fn from_model(model: &LagrangianModel, t: S, q: Vec<S>, p: Vec<S>) -> Result<Self, ModelError> {
        let energy = model.hamiltonian(&q, &p)?;
        Ok(Self { t, q, p, energy })
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.energy.is_finite() && self.q.iter().chain(&self.p).all(|x| x.is_finite())
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// `H = |p|^2/2 - 1/|q|`.
pub fn kepler_hamiltonian<S: Real>(q: &[S], p: &[S]) -> Result<S, ModelError> {
    LagrangianModel::kepler().hamiltonian(q, p)
}

/// Perihelion start of a unit semi-major-axis orbit of eccentricity `e`.
pub fn kepler_initial_state<S: Real>(e: f64) -> Result<ExtendedState<S>, ModelError> {
    if !(0.0..1.0).contains(&e) {
        return Err(ModelError::InvalidParameter(format!(
            "eccentricity e = {e} must lie in [0, 1)"
        )));
    }
    let es = S::of(e);
    let q = vec![S::one() - es, S::zero()];
    let p = vec![S::zero(), ((S::one() + es) / (S::one() - es)).sqrt()];
    ExtendedState::from_model(&LagrangianModel::kepler(), S::zero(), q, p)
}

/// Planar angular momentum `q1 p2 - q2 p1`.
pub fn angular_momentum<S: Real>(q: &[S], p: &[S]) -> S {
    q[0] * p[1] - q[1] * p[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fd_grad(model: &LagrangianModel, q: &[f64]) -> Vec<f64> {
        (0..q.len())
            .map(|j| {
                let d = 1e-5 * (1.0 + q[j].abs());
                let mut a = q.to_vec();
                let mut b = q.to_vec();
                a[j] += d;
                b[j] -= d;
                (model.potential(&a).unwrap() - model.potential(&b).unwrap()) / (2.0 * d)
            })
            .collect()
    }

    fn fd_hess(model: &LagrangianModel, q: &[f64]) -> Matrix<f64> {
        let n = q.len();
        let mut h = Matrix::zeros(n, n);
        for j in 0..n {
            let d = 1e-5 * (1.0 + q[j].abs());
            let mut a = q.to_vec();
            let mut b = q.to_vec();
            a[j] += d;
            b[j] -= d;
            let ga = model.grad(&a).unwrap();
            let gb = model.grad(&b).unwrap();
            for i in 0..n {
                h[(i, j)] = (ga[i] - gb[i]) / (2.0 * d);
            }
        }
        h
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-6 * (1.0 + b.abs())
    }

    #[test]
    fn oscillator_derivatives() {
        let m = LagrangianModel::oscillator(1.0, 1.0).unwrap();
        assert_eq!(m.derivs_1d(2.0).unwrap(), [2.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn pendulum_equilibrium_derivatives() {
        let m = LagrangianModel::pendulum(1.0, 1.0).unwrap();
        let d = m.derivs_1d(0.0).unwrap();
        assert_eq!(d, [-1.0, 0.0, 1.0, -0.0]);
    }

    #[test]
    fn kepler_potential_at_perihelion() {
        let m = LagrangianModel::kepler();
        let q = [0.3, 0.0];
        assert_relative_eq!(m.potential(&q).unwrap(), -10.0 / 3.0, max_relative = 1e-15);
        let g = m.grad(&q).unwrap();
        assert_relative_eq!(g[0], 0.3 / 0.027, max_relative = 1e-14);
        assert_eq!(g[1], 0.0);
        let fd = fd_grad(&m, &q);
        assert!(close(fd[0], g[0]));
    }

    #[test]
    fn third_order_needs_one_dof() {
        let m = LagrangianModel::kepler();
        assert_eq!(
            m.potential_derivs(&[0.3, 0.1], 3).unwrap_err(),
            ModelError::UnsupportedOrder { order: 3, n: 2 }
        );
    }

    #[test]
    fn circular_orbit_hamiltonian() {
        assert_eq!(kepler_hamiltonian(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), -0.5);
        assert!(matches!(
            kepler_hamiltonian(&[0.0, 0.0], &[0.3, 1.0]),
            Err(ModelError::Collision(_))
        ));
    }

    #[test]
    fn initial_state_values() {
        let s = kepler_initial_state::<f64>(0.1).unwrap();
        assert_eq!(s.q, vec![0.9, 0.0]);
        assert_relative_eq!(s.p[1], (1.1f64 / 0.9).sqrt(), max_relative = 1e-15);
        let s = kepler_initial_state::<f64>(0.7).unwrap();
        assert_relative_eq!(s.q[0], 0.3, max_relative = 1e-15);
        assert_relative_eq!(s.p[1], (1.7f64 / 0.3).sqrt(), max_relative = 1e-15);
        let c = kepler_initial_state::<f64>(0.0).unwrap();
        assert_eq!((c.q[0], c.p[1], c.energy), (1.0, 1.0, -0.5));
        assert!(kepler_initial_state::<f64>(1.0).is_err());
        assert!(kepler_initial_state::<f64>(-0.1).is_err());
    }

    #[test]
    fn perihelion_energy_is_minus_half_at_five_eccentricities() {
        for e in [0.05, 0.2, 0.45, 0.7, 0.9] {
            let (q, p) = ([1.0 - e, 0.0], [0.0, ((1.0 + e) / (1.0 - e)).sqrt()]);
            // (1 + e - 2) / (2 (1 - e)) simplifies to -1/2
            let h = kepler_hamiltonian(&q, &p).unwrap();
            assert!((h + 0.5).abs() < 1e-14, "e = {e}: {h}");
        }
    }

    #[test]
    fn twenty_eccentricities_give_minus_half() {
        for i in 0..20 {
            let e = 0.9 * i as f64 / 19.0;
            let s = kepler_initial_state::<f64>(e).unwrap();
            assert!((s.energy + 0.5).abs() < 1e-14 * (1.0 + 1.0 / (1.0 - e)));
        }
    }

    #[test]
    fn rejects_bad_mass() {
        assert!(LagrangianModel::oscillator(1.0, 0.0).is_err());
        let indefinite = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert_eq!(
            LagrangianModel::new("x", indefinite, Potential::Oscillator { k: 1.0 }).unwrap_err(),
            ModelError::NotPositiveDefinite
        );
    }

    #[test]
    fn general_mass_inverse() {
        let m = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let model = LagrangianModel::new("x", m, Potential::Oscillator { k: 1.0 }).unwrap();
        let p = [0.3, -1.2];
        let v = model.mass_inv_mul(&p);
        let back = model.mass_mul(&v);
        assert_relative_eq!(back[0], p[0], max_relative = 1e-14);
        assert_relative_eq!(back[1], p[1], max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn legendre_identity(q in -2.0..2.0f64, v in -3.0..3.0f64, k in 0.0..4.0f64, m in 0.2..3.0f64) {
            for model in [LagrangianModel::oscillator(k, m).unwrap(), LagrangianModel::pendulum(k, m).unwrap()] {
                let p = model.mass_mul(&[v]);
                let lhs = model.hamiltonian(&[q], &p).unwrap() + model.lagrangian(&[q], &[v]).unwrap();
                prop_assert!((lhs - m * v * v).abs() <= 1e-12 * (1.0 + m * v * v));
            }
        }

        #[test]
        fn kepler_legendre_identity(r in 0.2..3.0f64, th in 0.0..6.3f64, v0 in -2.0..2.0f64, v1 in -2.0..2.0f64) {
            let model = LagrangianModel::kepler();
            let q = [r * th.cos(), r * th.sin()];
            let v = [v0, v1];
            let lhs = model.hamiltonian(&q, &v).unwrap() + model.lagrangian(&q, &v).unwrap();
            prop_assert!((lhs - (v0 * v0 + v1 * v1)).abs() < 1e-12);
        }

        #[test]
        fn analytic_derivatives_match_fd(r in 0.2..3.0f64, th in 0.0..6.3f64, x in -3.0..3.0f64) {
            let kepler = LagrangianModel::kepler();
            let q = [r * th.cos(), r * th.sin()];
            let g = kepler.grad(&q).unwrap();
            let fd = fd_grad(&kepler, &q);
            prop_assert!(close(fd[0], g[0]) && close(fd[1], g[1]));
            let h = kepler.hessian(&q).unwrap();
            let fh = fd_hess(&kepler, &q);
            for i in 0..2 { for j in 0..2 { prop_assert!(close(fh[(i, j)], h[(i, j)])); } }

            for model in [LagrangianModel::oscillator(1.7, 1.0).unwrap(), LagrangianModel::pendulum(0.8, 1.0).unwrap()] {
                let [_, vq, vqq, vqqq] = model.derivs_1d(x).unwrap();
                prop_assert!(close(fd_grad(&model, &[x])[0], vq));
                prop_assert!(close(fd_hess(&model, &[x])[(0, 0)], vqq));
                let d = 1e-5;
                let third = (model.derivs_1d(x + d).unwrap()[2] - model.derivs_1d(x - d).unwrap()[2]) / (2.0 * d);
                prop_assert!(close(third, vqqq));
            }
        }

        #[test]
        fn angular_momentum_rotation_invariant(q0 in -2.0..2.0f64, q1 in -2.0..2.0f64, p0 in -2.0..2.0f64, p1 in -2.0..2.0f64, th in 0.0..6.3f64) {
            let (c, s) = (th.cos(), th.sin());
            let rot = |x: [f64; 2]| [c * x[0] - s * x[1], s * x[0] + c * x[1]];
            let l0 = angular_momentum(&[q0, q1], &[p0, p1]);
            let l1 = angular_momentum(&rot([q0, q1]), &rot([p0, p1]));
            prop_assert!((l0 - l1).abs() < 1e-13);
        }
    }
}
