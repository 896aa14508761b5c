//! Convergence of the deterministic and stochastic integrators.

use fluortraj::bloch::BlochVector;
use fluortraj::dynamics::{analytic_decay, integrate_deterministic, integrate_sme, integrate_sme_with, lindblad_rhs, Vec3};
use fluortraj::ensemble::simulate_with_normals;
use fluortraj::measure::{Scheme, SchemeConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

fn lindblad(gamma: f64) -> impl Fn(&Vec3) -> Vec3 {
    move |v| lindblad_rhs(&BlochVector::from_vector(v), gamma)
}

fn endpoint_error(q0: BlochVector, gamma: f64, t: f64, dt: f64) -> f64 {
    let tr = integrate_deterministic(lindblad(gamma), q0, t, dt).unwrap();
    tr.final_state().distance(&analytic_decay(&q0, t, gamma))
}

#[test]
fn rk4_endpoint_matches_closed_form() {
    let err = endpoint_error(BlochVector::EXCITED, 1.0, 5.0, 1e-3);
    assert!(err < 1e-10, "{err:e}");
}

#[test]
fn rk4_is_fourth_order() {
    let q0 = BlochVector::new(0.6, -0.3, 0.5);
    let errs: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&dt| endpoint_error(q0, 1.3, 4.0, dt)).collect();
    for w in errs.windows(2) {
        assert!(w[0] / w[1] >= 8.0, "{errs:?}");
        let order = (w[0] / w[1]).log2();
        assert!(order >= 3.9, "order {order}");
    }
}

#[test]
fn zero_rhs_is_constant() {
    let q0 = BlochVector::new(0.1, 0.2, -0.3);
    let tr = integrate_deterministic(|_| Vec3::zeros(), q0, 1.0, 0.01).unwrap();
    assert!(tr.states.iter().all(|q| *q == q0));
}

#[test]
fn rk4_rejects_states_leaving_the_ball() {
    let push = |v: &Vec3| v * 2.0;
    assert!(integrate_deterministic(push, BlochVector::new(0.0, 0.0, 0.5), 2.0, 0.01).is_err());
}

#[test]
fn blind_homodyne_sme_follows_lindblad() {
    let cfg = SchemeConfig::new(Scheme::HomodyneInefficient, 1.0, 1e-3).with_eta(0.0);
    let q0 = BlochVector::new(0.6, 0.0, 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let tr = integrate_sme(q0, &cfg, 5.0, &mut rng).unwrap();
    let worst = tr
        .times
        .iter()
        .zip(&tr.states)
        .map(|(&t, q)| q.distance(&analytic_decay(&q0, t, 1.0)))
        .fold(0.0, f64::max);
    assert!(worst < cfg.dt, "{worst:e}");
}

#[test]
fn sme_mean_decay_from_excited_state() {
    let cfg = SchemeConfig::new(Scheme::Homodyne, 1.0, 1e-3);
    let n = 10_000;
    let finals: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
            let tr = integrate_sme(BlochVector::EXCITED, &cfg, 5.0, &mut rng).unwrap();
            tr.states.iter().step_by(50).map(|q| q.z).collect()
        })
        .collect();
    let len = finals[0].len();
    let mut worst = 0.0_f64;
    for k in 1..len {
        let t = (k * 50) as f64 * cfg.dt;
        let mean = finals.iter().map(|v| v[k]).sum::<f64>() / n as f64;
        let var = finals.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let gap = (mean - (2.0 * (-t).exp() - 1.0)).abs() / se;
        worst = worst.max(gap);
    }
    println!("EM mean decay: worst deviation {worst:.2} standard errors");
    assert!(worst <= 3.0);
}

/// Brownian path on a fine grid, aggregated to coarser steps so every dt sees the same noise.
struct BrownianPath {
    fine_dt: f64,
    normals: Vec<[f64; 2]>,
}

impl BrownianPath {
    fn new(seed: u64, fine_dt: f64, t: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = (t / fine_dt).round() as usize;
        let normals = (0..steps)
            .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        Self { fine_dt, normals }
    }

    fn coarse(&self, dt: f64) -> impl Fn(usize) -> [f64; 2] + '_ {
        let m = (dt / self.fine_dt).round() as usize;
        let scale = (m as f64).sqrt().recip();
        move |k| {
            let chunk = &self.normals[k * m..(k + 1) * m];
            let s = chunk.iter().fold([0.0, 0.0], |a, n| [a[0] + n[0], a[1] + n[1]]);
            [s[0] * scale, s[1] * scale]
        }
    }
}

#[test]
fn sme_and_kraus_map_agree_on_shared_noise() {
    // Euler–Maruyama has strong order ½ for multiplicative noise, so the
    // coupled gap shrinks like √dt.
    let dts = [2e-3, 1e-3, 5e-4];
    let q0 = BlochVector::new(0.6, 0.0, 0.8);
    for cfg in [
        SchemeConfig::new(Scheme::Homodyne, 1.0, 1e-3),
        SchemeConfig::new(Scheme::Heterodyne, 1.0, 1e-3),
    ] {
        let paths = 200;
        let gaps: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let c = cfg.with_dt(dt);
                (0..paths)
                    .into_par_iter()
                    .map(|s| {
                        let w = BrownianPath::new(s, 5e-4, 1.0);
                        let a = integrate_sme_with(q0, &c, 1.0, w.coarse(dt)).unwrap();
                        let b = simulate_with_normals(&c, q0, 1.0, w.coarse(dt)).unwrap();
                        a.states
                            .iter()
                            .zip(&b.states)
                            .map(|(x, y)| x.distance(y))
                            .fold(0.0, f64::max)
                    })
                    .sum::<f64>()
                    / paths as f64
            })
            .collect();
        let slope = (gaps[0] / gaps[2]).log2() / 2.0;
        println!("{}: mean max|dq| {gaps:?}, slope {slope:.2}", cfg.scheme);
        assert!(gaps[1] < 0.1);
        assert!((0.35..=0.7).contains(&slope), "slope {slope}");
    }
}

#[test]
fn sme_weak_order_is_one() {
    // Differences of coupled ensemble means cancel the shared sampling noise.
    let dts = [0.01, 0.005, 0.0025];
    let q0 = BlochVector::new(0.0, 0.0, 0.9);
    for cfg in [
        SchemeConfig::new(Scheme::HomodyneInefficient, 1.0, 0.01).with_eta(0.1),
        SchemeConfig::new(Scheme::Heterodyne, 1.0, 0.01).with_eta(0.1),
    ] {
        let n = 20_000;
        let finals: Vec<Vec<f64>> = (0..n as u64)
            .into_par_iter()
            .map(|s| {
                let w = BrownianPath::new(s, 0.0025, 1.0);
                dts.iter()
                    .map(|&dt| {
                        integrate_sme_with(q0, &cfg.with_dt(dt), 1.0, w.coarse(dt))
                            .unwrap()
                            .final_state()
                            .z
                    })
                    .collect()
            })
            .collect();
        let mean = |i: usize| finals.iter().map(|v| v[i]).sum::<f64>() / n as f64;
        let d1 = mean(0) - mean(1);
        let d2 = mean(1) - mean(2);
        let order = (d1 / d2).log2();
        println!("{}: weak order {order:.3}", cfg.scheme);
        assert!((0.8..=1.2).contains(&order), "order {order}");
    }
}
