//! Two-point boundary problems: initial momenta whose flow reaches a target
//! state after a fixed time.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

use super::flow::{flow_endpoint, hamilton_flow, OpSolution};
use super::hamiltonian::{Coords, PhasePoint, PlanarHamiltonian, PolarHamiltonian, PolarPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingSettings {
    pub p_min: f64,
    pub p_max: f64,
    pub points: usize,
    pub dt: f64,
    /// Accepted `|q(T) − q_f|`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ShootingSettings {
    fn default() -> Self {
        Self {
            p_min: -8.0,
            p_max: 8.0,
            points: 400,
            dt: 1e-3,
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

impl ShootingSettings {
    fn validate(&self, t_final: f64) -> Result<()> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return config(format!("shooting needs T > 0, got {t_final}"));
        }
        if !(self.p_min < self.p_max) || self.points < 2 {
            return config("momentum grid needs p_min < p_max and at least two points");
        }
        if !(self.dt > 0.0) || !(self.tolerance > 0.0) {
            return config("dt and tolerance must be positive");
        }
        Ok(())
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.points)
            .map(|k| self.p_min + (self.p_max - self.p_min) * k as f64 / (self.points - 1) as f64)
            .collect()
    }
}

/// Final mismatch `ϑ(T) − ϑ_f` across the momentum grid; `None` where the flow diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchProfile {
    pub momenta: Vec<f64>,
    pub mismatch: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingRoot<const N: usize> {
    pub p_initial: Coords<N>,
    pub mismatch: f64,
    pub solution: OpSolution<N>,
}

impl<const N: usize> ShootingRoot<N> {
    pub fn action(&self) -> f64 {
        self.solution.total_action()
    }
}

fn by_action_descending<const N: usize>(roots: &mut [ShootingRoot<N>]) {
    roots.sort_by(|a, b| b.action().total_cmp(&a.action()));
}

/// Signed mismatch for the pure-state problem. Angles are not wrapped: paths
/// never pass through the ground state, so the sign of `ϑ` tells the side.
pub fn polar_mismatch(
    h: &PolarHamiltonian,
    theta_i: f64,
    theta_f: f64,
    t_final: f64,
    p: f64,
    dt: f64,
) -> Option<f64> {
    flow_endpoint(h, PolarPoint::polar(theta_i, p), t_final, dt)
        .ok()
        .map(|end| end.theta() - theta_f)
}

pub fn mismatch_profile(
    h: &PolarHamiltonian,
    theta_i: f64,
    theta_f: f64,
    t_final: f64,
    settings: &ShootingSettings,
) -> MismatchProfile {
    let momenta = settings.momenta();
    let mismatch = momenta
        .par_iter()
        .map(|&p| polar_mismatch(h, theta_i, theta_f, t_final, p, settings.dt))
        .collect();
    MismatchProfile { momenta, mismatch }
}

/// Every root bracketed by a sign change on the grid, refined by bisection,
/// most probable (largest action) first.
pub fn shoot(
    h: &PolarHamiltonian,
    theta_i: f64,
    theta_f: f64,
    t_final: f64,
    settings: &ShootingSettings,
) -> Result<Vec<ShootingRoot<1>>> {
    settings.validate(t_final)?;
    let profile = mismatch_profile(h, theta_i, theta_f, t_final, settings);
    let mut brackets = Vec::new();
    for k in 0..profile.momenta.len() - 1 {
        if let (Some(a), Some(b)) = (profile.mismatch[k], profile.mismatch[k + 1]) {
            if a == 0.0 || a.signum() != b.signum() {
                brackets.push((profile.momenta[k], a, profile.momenta[k + 1], b));
            }
        }
    }
    let mut roots: Vec<ShootingRoot<1>> = brackets
        .par_iter()
        .filter_map(|&(lo, f_lo, hi, f_hi)| {
            let (p, m) = bisect(h, theta_i, theta_f, t_final, settings, lo, f_lo, hi, f_hi)?;
            let solution = hamilton_flow(h, PolarPoint::polar(theta_i, p), t_final, settings.dt).ok()?;
            Some(ShootingRoot {
                p_initial: Coords::<1>::new(p),
                mismatch: m,
                solution,
            })
        })
        .collect();
    roots.dedup_by(|a, b| (a.p_initial[0] - b.p_initial[0]).abs() < 1e-12);
    if roots.is_empty() {
        return Err(Error::NoShootingRoot(Box::new(profile)));
    }
    by_action_descending(&mut roots);
    Ok(roots)
}

/// Bisection that gives up on brackets straddling a jump rather than a root.
#[allow(clippy::too_many_arguments)]
fn bisect(
    h: &PolarHamiltonian,
    theta_i: f64,
    theta_f: f64,
    t_final: f64,
    settings: &ShootingSettings,
    mut lo: f64,
    mut f_lo: f64,
    mut hi: f64,
    f_hi: f64,
) -> Option<(f64, f64)> {
    if f_lo == 0.0 {
        return Some((lo, 0.0));
    }
    let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..settings.max_iterations {
        if best.1.abs() < settings.tolerance {
            return Some(best);
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = polar_mismatch(h, theta_i, theta_f, t_final, mid, settings.dt)?;
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    (best.1.abs() < settings.tolerance).then_some(best)
}

/// Two-dimensional problem in the `(x, z)` plane: Newton iterations with a
/// finite-difference Jacobian started from the local minima of the mismatch
/// on an `n × n` momentum lattice.
pub fn shoot_planar(
    h: &PlanarHamiltonian,
    q_i: [f64; 2],
    q_f: [f64; 2],
    t_final: f64,
    settings: &ShootingSettings,
    lattice: usize,
) -> Result<Vec<ShootingRoot<2>>> {
    settings.validate(t_final)?;
    if lattice < 3 {
        return config("planar shooting needs a lattice of at least 3 x 3");
    }
    let target = Coords::<2>::new(q_f[0], q_f[1]);
    let mismatch = |p: &Coords<2>| -> Option<Coords<2>> {
        let start = PhasePoint {
            q: Coords::<2>::new(q_i[0], q_i[1]),
            p: *p,
        };
        flow_endpoint(h, start, t_final, settings.dt).ok().map(|end| end.q - target)
    };
    let axis: Vec<f64> = (0..lattice)
        .map(|k| settings.p_min + (settings.p_max - settings.p_min) * k as f64 / (lattice - 1) as f64)
        .collect();
    let cells: Vec<(usize, usize)> = (0..lattice).flat_map(|i| (0..lattice).map(move |j| (i, j))).collect();
    let norms: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            mismatch(&Coords::<2>::new(axis[i], axis[j]))
                .map_or(f64::INFINITY, |m| m.norm())
        })
        .collect();
    let at = |i: usize, j: usize| norms[i * lattice + j];
    let seeds: Vec<Coords<2>> = cells
        .iter()
        .filter(|&&(i, j)| {
            let v = at(i, j);
            v.is_finite()
                && (i.saturating_sub(1)..=(i + 1).min(lattice - 1)).all(|a| {
                    (j.saturating_sub(1)..=(j + 1).min(lattice - 1)).all(|b| (a, b) == (i, j) || at(a, b) >= v)
                })
        })
        .map(|&(i, j)| Coords::<2>::new(axis[i], axis[j]))
        .collect();

    let step = (settings.p_max - settings.p_min) / (lattice - 1) as f64;
    let mut found: Vec<(Coords<2>, f64)> = seeds
        .par_iter()
        .filter_map(|&seed| newton2(&mismatch, seed, settings, step))
        .collect();
    found.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then(a.0[1].total_cmp(&b.0[1])));
    let mut unique: Vec<(Coords<2>, f64)> = Vec::new();
    for f in found {
        if !unique.iter().any(|u| (u.0 - f.0).amax() < 1e-6) {
            unique.push(f);
        }
    }
    let mut roots: Vec<ShootingRoot<2>> = unique
        .into_iter()
        .filter_map(|(p, m)| {
            let start = PhasePoint {
                q: Coords::<2>::new(q_i[0], q_i[1]),
                p,
            };
            let solution = hamilton_flow(h, start, t_final, settings.dt).ok()?;
            Some(ShootingRoot {
                p_initial: p,
                mismatch: m,
                solution,
            })
        })
        .collect();
    if roots.is_empty() {
        return Err(Error::NotFound(format!(
            "no momentum in [{}, {}]^2 reaches ({}, {}) at T = {t_final}",
            settings.p_min, settings.p_max, q_f[0], q_f[1]
        )));
    }
    by_action_descending(&mut roots);
    Ok(roots)
}

fn newton2<F>(mismatch: &F, seed: Coords<2>, settings: &ShootingSettings, max_step: f64) -> Option<(Coords<2>, f64)>
where
    F: Fn(&Coords<2>) -> Option<Coords<2>>,
{
    let mut p = seed;
    let mut m = mismatch(&p)?;
    for _ in 0..settings.max_iterations {
        if m.norm() < settings.tolerance {
            return Some((p, m.norm()));
        }
        let eps = 1e-7 * (1.0 + p.amax());
        let mut jac = nalgebra::Matrix2::<f64>::zeros();
        for axis in 0..2 {
            let mut dp = Coords::<2>::zeros();
            dp[axis] = eps;
            let plus = mismatch(&(p + dp))?;
            let minus = mismatch(&(p - dp))?;
            jac.set_column(axis, &((plus - minus) / (2.0 * eps)));
        }
        // least squares: from |e⟩ the endpoint depends on p_x alone
        let mut delta = jac.svd(true, true).solve(&(-m), 1e-10 * jac.amax()).ok()?;
        if delta.norm() > max_step {
            delta *= max_step / delta.norm();
        }
        // backtracking on |m|
        let mut scale = 1.0;
        loop {
            let trial = p + delta * scale;
            if let Some(mt) = mismatch(&trial) {
                if mt.norm() < m.norm() {
                    p = trial;
                    m = mt;
                    break;
                }
            }
            scale *= 0.5;
            if scale < 1e-6 {
                return None;
            }
        }
    }
    (m.norm() < settings.tolerance).then_some((p, m.norm()))
}
