use proptest::prelude::*;

use varint::integrators::{avi_calibrate_delta_a, avi_run, epavi_run, midpoint_fixed_step, EpaviOptions, MonitorFn};
use varint::linalg::Matrix;
use varint::models::{angular_momentum, kepler_hamiltonian, kepler_initial_state};
use varint::{DoubleDouble, ExtendedState, LagrangianModel, Real, SolverConfig};

fn fd_det(model: &LagrangianModel, x: &[f64], h: f64) -> f64 {
    let n = x.len() / 2;
    let cfg = SolverConfig::with_tol(1e-15);
    let map = |y: &[f64]| {
        let s = ExtendedState::new(0.0, y[..n].to_vec(), y[n..].to_vec(), 0.0);
        let (next, _) = midpoint_fixed_step(model, &s, h, &cfg).unwrap();
        let mut out = next.q;
        out.extend(next.p);
        out
    };
    let eps = 1e-5;
    let mut jac = Matrix::zeros(2 * n, 2 * n);
    for j in 0..2 * n {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[j] += eps;
        xm[j] -= eps;
        let (fp, fm) = (map(&xp), map(&xm));
        for i in 0..2 * n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * eps);
        }
    }
    jac.determinant()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn midpoint_map_preserves_volume_pendulum(q in -2.0f64..2.0, p in -1.5f64..1.5, h in 0.01f64..0.3) {
        let m = LagrangianModel::pendulum(1.0, 1.0).unwrap();
        let d = fd_det(&m, &[q, p], h);
        prop_assert!((d - 1.0).abs() < 1e-6, "det = {d}");
    }

    #[test]
    fn midpoint_map_preserves_volume_kepler(
        r in 0.5f64..2.0, th in 0.0f64..std::f64::consts::TAU, pr in -0.5f64..0.5, pt in 0.3f64..1.2, h in 0.005f64..0.05,
    ) {
        let m = LagrangianModel::kepler();
        let x = [r * th.cos(), r * th.sin(), pr * th.cos() - pt * th.sin(), pr * th.sin() + pt * th.cos()];
        let d = fd_det(&m, &x, h);
        prop_assert!((d - 1.0).abs() < 1e-6, "det = {d}");
    }

    #[test]
    fn kepler_energy_agrees_across_precisions(
        x in -2.0f64..2.0, y in -2.0f64..2.0, px in -1.5f64..1.5, py in -1.5f64..1.5,
    ) {
        prop_assume!(x.hypot(y) > 0.1);
        let h64 = kepler_hamiltonian(&[x, y], &[px, py]).unwrap();
        let dd = |v: f64| DoubleDouble::of(v);
        let hdd = kepler_hamiltonian(&[dd(x), dd(y)], &[dd(px), dd(py)]).unwrap();
        let scale = 0.5 * (px * px + py * py) + 1.0 / x.hypot(y);
        prop_assert!((hdd - h64).abs().as_f64() <= 1e-15 * scale, "{h64} vs {hdd:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn epavi_time_is_increasing_and_steps_bounded(e in 0.0f64..0.8, h0 in 0.002f64..0.02) {
        let m = LagrangianModel::kepler();
        let s0 = kepler_initial_state::<f64>(e).unwrap();
        let traj = epavi_run(&m, &s0, h0, 1.5, &SolverConfig::default(), &EpaviOptions::default()).unwrap();
        prop_assert!(traj.time_strictly_increasing());
        for r in &traj.steps {
            prop_assert!((1e-3..=1e3).contains(&(r.h / h0)), "h/h0 = {}", r.h / h0);
        }
        let l0 = angular_momentum(&s0.q, &s0.p);
        let l1 = angular_momentum(&traj.last().q, &traj.last().p);
        prop_assert!((l1 - l0).abs() < 1e-12);
    }

    #[test]
    fn avi_steps_follow_the_monitor(e in 0.0f64..0.8, h0 in 0.002f64..0.02, arclength in any::<bool>()) {
        let m = LagrangianModel::kepler();
        let s0 = kepler_initial_state::<f64>(e).unwrap();
        let g = if arclength { MonitorFn::Arclength { h0: s0.energy } } else { MonitorFn::Kepler };
        let cfg = SolverConfig::default();
        let da = avi_calibrate_delta_a(&m, g, &s0, h0, &cfg).unwrap();
        let traj = avi_run(&m, g, &s0, da, 1.5, &cfg).unwrap();
        prop_assert!(traj.time_strictly_increasing());
        prop_assert!((traj.steps[0].h - h0).abs() < 1e-12 * h0);
        for r in &traj.steps {
            prop_assert!((1e-3..=1e3).contains(&(r.h / da)), "h/da = {}", r.h / da);
        }
    }
}
