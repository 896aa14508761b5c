//! Optimal-path Hamiltonians, flows, manifolds and shooting.

use std::f64::consts::PI;

use fluortraj::bloch::BlochVector;
use fluortraj::dynamics::kraus_rhs;
use fluortraj::ensemble::{ellipse_residual, EllipseLaw};
use fluortraj::measure::{Readout, Scheme, SchemeConfig};
use fluortraj::oppath::{
    composed_hamiltonian, hamilton_flow, momentum_grid, propagate_lm, shoot, shoot_planar,
    stationary_points, PhasePoint, PlanarHamiltonian, PlanarPoint, PolarHamiltonian, PolarPoint,
    PortraitSpec, ShootingSettings, StochasticHamiltonian,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn polar_hamiltonian_is_the_restricted_composition() {
    let h = PolarHamiltonian::new(1.4);
    let cfg = SchemeConfig::new(Scheme::Homodyne, 1.4, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let theta = rng.random_range(-PI..PI);
        let p = rng.random_range(-3.0..3.0);
        let pt = PolarPoint::polar(theta, p);
        let r = h.optimal_readout(&pt);
        let q = BlochVector::on_circle(theta);
        let composed = composed_hamiltonian(&q, [p * theta.cos(), 0.0, -p * theta.sin()], r, &cfg).unwrap();
        let direct = h.energy(&pt);
        assert!((composed - direct).abs() < 1e-10, "ϑ={theta} p={p}: {composed} vs {direct}");
    }
}

#[test]
fn planar_hamiltonian_is_the_composition() {
    let h = PlanarHamiltonian::new(0.8, 0.45).unwrap();
    let cfg = SchemeConfig::new(Scheme::HomodyneInefficient, 0.8, 1e-3).with_eta(0.45);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let q = BlochVector::new(rng.random_range(-0.7..0.7), 0.0, rng.random_range(-0.7..0.7));
        let (px, pz, r) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-3.0..3.0));
        let a = composed_hamiltonian(&q, [px, 0.0, pz], r, &cfg).unwrap();
        let b = h.with_readout(&PlanarPoint::planar(q.x, q.z, px, pz), r);
        assert!((a - b).abs() < 1e-12);
    }
}

/// Golden-section search for the maximum of `f` on `[a, b]`, finished with a
/// parabola through three nearby samples.
fn maximize(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while b - a > 1e-5 {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let m = 0.5 * (a + b);
    let h = 1e-2;
    let (l, c0, r) = (f(m - h), f(m), f(m + h));
    m + 0.5 * h * (l - r) / (l - 2.0 * c0 + r)
}

#[test]
fn optimal_readout_maximizes_the_inefficient_hamiltonian() {
    let h = PlanarHamiltonian::new(1.0, 0.45).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let pt = PlanarPoint::planar(
            rng.random_range(-0.7..0.7),
            rng.random_range(-0.7..0.7),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        let numeric = maximize(|r| h.with_readout(&pt, r), -40.0, 40.0);
        let closed = h.optimal_readout(&pt);
        assert!((numeric - closed).abs() < 1e-8, "{pt:?}: {numeric} vs {closed}");
        // the readout enters quadratically with curvature −1
        let (r, d) = (closed, 0.5);
        let curvature = (h.with_readout(&pt, r + d) - 2.0 * h.with_readout(&pt, r) + h.with_readout(&pt, r - d)) / (d * d);
        assert!((curvature + 1.0).abs() < 1e-9);
    }
}

#[test]
fn readout_limits() {
    let h = PlanarHamiltonian::new(2.0, 1.0).unwrap();
    assert_eq!(h.optimal_readout(&PlanarPoint::planar(0.0, -1.0, 3.0, -7.0)), 0.0);
    let pt = PlanarPoint::planar(0.4, 0.2, 0.0, 0.0);
    assert!((h.optimal_readout(&pt) - 2.0_f64.sqrt() * 0.4).abs() < 1e-15);
}

proptest! {
    #[test]
    fn portrait_is_mirror_symmetric(theta in -PI..PI, p in -3.0..3.0f64, gamma in 0.1..5.0f64) {
        let h = PolarHamiltonian::new(gamma);
        let a = h.value(theta, p);
        let b = h.value(-theta, -p);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn readout_curvature_is_minus_one(x in -0.9..0.9f64, z in -0.9..0.9f64, px in -5.0..5.0f64, pz in -5.0..5.0f64, r in -5.0..5.0f64) {
        let h = PlanarHamiltonian::new(1.0, 0.6).unwrap();
        let pt = PlanarPoint::planar(x, z, px, pz);
        let d = 1.0;
        let c = h.with_readout(&pt, r + d) - 2.0 * h.with_readout(&pt, r) + h.with_readout(&pt, r - d);
        prop_assert!((c + 1.0).abs() < 1e-9);
    }
}

#[test]
fn fixed_point_energies_and_gradients() {
    let h = PolarHamiltonian::new(1.0);
    assert_eq!(h.value(0.0, 0.0), -1.0);
    assert!(h.value(PI, 0.0).abs() < 1e-15);
    let pts = stationary_points(&h, &PortraitSpec::default()).unwrap();
    assert_eq!(pts.len(), 2);
    for sp in pts {
        assert!(sp.gradient_norm < 1e-10);
        assert!(sp.p.abs() < 1e-10);
        let expected = if sp.theta.abs() < 1.0 { -1.0 } else { 0.0 };
        assert!((sp.energy - expected).abs() < 1e-12);
    }
}

/// Five-point central derivative of a sampled series at interior index `k`.
fn stencil(v: &[f64], k: usize, h: f64) -> f64 {
    (v[k - 2] - 8.0 * v[k - 1] + 8.0 * v[k + 1] - v[k + 2]) / (12.0 * h)
}

#[test]
fn polar_optimal_paths_are_trajectories() {
    let h = PolarHamiltonian::new(1.0);
    let cfg = SchemeConfig::new(Scheme::Homodyne, 1.0, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let start = PolarPoint::polar(rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0));
        let dt = 1e-3;
        let Ok(sol) = hamilton_flow(&h, start, 2.0, dt) else { continue };
        let xs: Vec<f64> = sol.points.iter().map(|p| p.theta().sin()).collect();
        let zs: Vec<f64> = sol.points.iter().map(|p| p.theta().cos()).collect();
        for (k, pt) in sol.points.iter().enumerate() {
            let q = h.state(&pt.q);
            let f = kraus_rhs(&q, &Readout::Dyne { r: sol.readouts[k] }, &cfg).unwrap();
            // analytic velocity ∂H/∂p mapped onto the circle
            let (_, dp) = h.gradient(pt);
            let (s, c) = pt.theta().sin_cos();
            assert!((dp[0] * c - f[0]).abs() < 1e-8 && (-dp[0] * s - f[2]).abs() < 1e-8);
            assert!(f[1].abs() < 1e-15);
            if k >= 2 && k + 2 < sol.len() {
                assert!((stencil(&xs, k, dt) - f[0]).abs() < 1e-8, "k={k}");
                assert!((stencil(&zs, k, dt) - f[2]).abs() < 1e-8, "k={k}");
            }
        }
    }
}

#[test]
fn planar_optimal_paths_are_trajectories() {
    let h = PlanarHamiltonian::new(1.0, 0.45).unwrap();
    let cfg = SchemeConfig::new(Scheme::HomodyneInefficient, 1.0, 1e-3).with_eta(0.45);
    let dt = 1e-3;
    for p0 in [[0.3, -0.2], [-0.5, 0.4], [1.0, 1.0]] {
        let start = PlanarPoint::planar(0.0, 1.0, p0[0], p0[1]);
        let sol = hamilton_flow(&h, start, 1.5, dt).unwrap();
        let xs: Vec<f64> = sol.points.iter().map(|p| p.q[0]).collect();
        let zs: Vec<f64> = sol.points.iter().map(|p| p.q[1]).collect();
        for k in 2..sol.len() - 2 {
            let q = h.state(&sol.points[k].q);
            let f = kraus_rhs(&q, &Readout::Dyne { r: sol.readouts[k] }, &cfg).unwrap();
            assert!((stencil(&xs, k, dt) - f[0]).abs() < 1e-8);
            assert!((stencil(&zs, k, dt) - f[2]).abs() < 1e-8);
        }
    }
}

#[test]
fn flow_off_the_excited_state_keeps_its_energy() {
    let h = PolarHamiltonian::new(1.0);
    // the saddle at ϑ = 0 repels at rate γ/2, so leaving it takes ~2·ln(10⁶)/γ
    let sol = hamilton_flow(&h, PolarPoint::polar(1e-6, 0.0), 40.0, 1e-3).unwrap();
    let end = sol.terminal().theta();
    assert!((end.abs() - PI).abs() < 1e-2, "ended at {end}");
    assert!(sol.energies.iter().all(|e| (e + 1.0).abs() < 1e-8));
}

#[test]
fn fixed_point_flow_is_constant() {
    let h = PolarHamiltonian::new(1.0);
    let sol = hamilton_flow(&h, PolarPoint::polar(PI, 0.0), 3.0, 1e-3).unwrap();
    assert!(sol.points.iter().all(|pt| (pt.theta() - PI).abs() < 1e-12 && pt.momentum().abs() < 1e-12));
}

#[test]
fn planar_flows_conserve_energy() {
    let h = PlanarHamiltonian::new(1.0, 0.45).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let start = PlanarPoint::planar(0.0, 1.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let sol = hamilton_flow(&h, start, 4.0, 1e-4).unwrap();
        assert!(sol.energy_drift() <= 1e-8, "{}", sol.energy_drift());
    }
}

#[test]
fn manifold_limits() {
    let grid = momentum_grid(1.0, 5);
    let h = PlanarHamiltonian::new(1.0, 0.45).unwrap();
    let lm = propagate_lm(&h, [0.0, 1.0], &grid, &[0.0, 0.5], 1e-3).unwrap();
    assert!(lm.at_time(0.0).all(|s| s.q == [0.0, 1.0]));

    let pure = PlanarHamiltonian::new(1.0, 1.0).unwrap();
    let lm = propagate_lm(&pure, [0.0, 1.0], &momentum_grid(2.0, 9), &[0.5, 1.0, 2.0], 1e-3).unwrap();
    assert!(!lm.samples.is_empty());
    for s in &lm.samples {
        let n = (s.q[0].powi(2) + s.q[1].powi(2)).sqrt();
        assert!((n - 1.0).abs() < 1e-8, "{s:?}");
    }
}

#[test]
fn manifold_lies_on_the_ellipses() {
    let h = PlanarHamiltonian::new(1.0, 0.45).unwrap();
    let law = EllipseLaw::from_initial(&BlochVector::EXCITED, 0.45, 1.0).unwrap();
    let times: Vec<f64> = (1..=8).map(|k| 0.5 * k as f64).collect();
    let lm = propagate_lm(&h, [0.0, 1.0], &momentum_grid(2.0, 21), &times, 1e-3).unwrap();
    for s in &lm.samples {
        let r = ellipse_residual(&BlochVector::new(s.q[0], 0.0, s.q[1]), s.time, &law).unwrap();
        assert!(r < 1e-6, "{s:?}: {r:e}");
    }
}

#[test]
fn shooting_meets_both_boundaries() {
    let h = PolarHamiltonian::new(1.0);
    let (ti, tf, t) = (0.0, -PI + 0.5, 3.0);
    let roots = shoot(&h, ti, tf, t, &ShootingSettings::default()).unwrap();
    assert!(!roots.is_empty());
    for w in roots.windows(2) {
        assert!(w[0].action() >= w[1].action());
    }
    for root in &roots {
        assert!((root.solution.initial().theta() - ti).abs() < 1e-12);
        assert!((root.solution.terminal().theta() - tf).abs() < 1e-6);
    }
}

#[test]
fn short_shots_barely_move() {
    let h = PolarHamiltonian::new(1.0);
    let settings = ShootingSettings {
        dt: 1e-4,
        ..ShootingSettings::default()
    };
    let mut last = f64::INFINITY;
    for t in [0.1, 0.01, 0.001] {
        let roots = shoot(&h, 0.7, 0.7, t, &settings).unwrap();
        let best = &roots[0];
        let travel = best
            .solution
            .points
            .iter()
            .map(|pt| (pt.theta() - 0.7).abs())
            .fold(0.0, f64::max);
        assert!(travel < last);
        last = travel;
    }
    assert!(last < 1e-3);
}

#[test]
fn planar_shooting_meets_both_boundaries() {
    let h = PlanarHamiltonian::new(1.0, 0.45).unwrap();
    let settings = ShootingSettings {
        p_min: -2.0,
        p_max: 2.0,
        ..ShootingSettings::default()
    };
    // |e⟩ reaches a curve only; a mixed start reaches an open set
    for q_i in [[0.0, 1.0], [0.3, 0.2]] {
        let known = hamilton_flow(&h, PhasePoint::planar(q_i[0], q_i[1], 0.4, -0.3), 1.0, 1e-3).unwrap();
        let target = [known.terminal().q[0], known.terminal().q[1]];
        let roots = shoot_planar(&h, q_i, target, 1.0, &settings, 9).unwrap();
        assert!(!roots.is_empty());
        for root in &roots {
            let sol = &root.solution;
            assert_eq!([sol.initial().q[0], sol.initial().q[1]], q_i);
            let end = sol.terminal().q;
            assert!((end[0] - target[0]).abs() < 1e-6 && (end[1] - target[1]).abs() < 1e-6);
        }
    }
}
