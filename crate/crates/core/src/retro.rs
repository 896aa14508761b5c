//! Retrodicted homodyne dynamics and their time-reversal symmetry.

use serde::{Deserialize, Serialize};

use crate::bloch::{BlochVector, DensityMatrix, Mat2};
use crate::dynamics::{kraus_rhs, Vec3};
use crate::error::{config, Error, Result};
use crate::measure::{kraus_homodyne, normalized, KrausSet, Readout, Scheme, SchemeConfig};

/// Bloch coordinates of the retrodicted (effect) state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetroState(pub BlochVector);

impl RetroState {
    pub fn new(q: BlochVector) -> Result<Self> {
        Ok(Self(q.checked()?))
    }

    /// Bloch negation, the action of time reversal on states.
    pub fn time_reversed(&self) -> BlochVector {
        -self.0
    }

    pub fn from_forward(q: &BlochVector) -> Self {
        Self(-*q)
    }
}

/// `ρ̲ → M†ρ̲M / tr(·)`.
pub fn retro_update(state: &RetroState, ks: &KrausSet) -> Result<RetroState> {
    if ks.scheme != Scheme::Homodyne {
        return Err(Error::Unsupported(format!("retrodiction for {}", ks.scheme)));
    }
    let rho = state.0.to_density()?;
    let m = rho.matrix();
    let acc = ks
        .ops
        .iter()
        .map(|op| op.matrix.adjoint() * m * op.matrix)
        .fold(Mat2::zeros(), |acc, t| acc + t);
    let out: DensityMatrix = normalized(acc, || "retrodicted homodyne update".into())?;
    Ok(RetroState(out.to_bloch()?))
}

/// Equations of motion of the retrodicted state for a fixed readout `r`.
pub fn retro_rhs(state: &RetroState, r: f64, theta: f64, gamma: f64) -> Vec3 {
    let BlochVector { x, y, z } = state.0;
    let (s, c) = theta.sin_cos();
    let k = r * gamma.sqrt();
    Vec3::new(
        0.5 * gamma * x * z + k * ((1.0 - z - x * x) * c + x * y * s),
        0.5 * gamma * y * z + k * ((y * y + z - 1.0) * s - x * y * c),
        0.5 * gamma * (z * z - 1.0) + k * (1.0 - z) * (x * c - y * s),
    )
}

/// Max-norm gap between the time-reversed retrodicted equations and the
/// forward homodyne equations at `q`. Under `q̲ = −q` and `dt̲ = −dt` the
/// retrodicted velocity `dq̲/dt̲` equals `q̇`.
pub fn reversal_symmetry_residual(q: &BlochVector, r: f64, theta: f64, gamma: f64) -> Result<f64> {
    let cfg = SchemeConfig::new(Scheme::Homodyne, gamma, 1e-3).with_theta(theta);
    let forward = kraus_rhs(q, &Readout::Dyne { r }, &cfg)?;
    let backward = retro_rhs(&RetroState::from_forward(q), r, theta, gamma);
    Ok((backward - forward).amax())
}

/// Runs the retrodicted update from `start` through `readouts` taken in
/// reverse order; returns the states visited, starting with `start`.
pub fn retrodict(start: RetroState, readouts: &[Readout], cfg: &SchemeConfig) -> Result<Vec<RetroState>> {
    if cfg.scheme != Scheme::Homodyne {
        return config(format!("retrodiction is implemented for ideal homodyne, not {}", cfg.scheme));
    }
    if cfg.is_driven() {
        return Err(Error::Unsupported("retrodiction with a drive".into()));
    }
    let mut out = Vec::with_capacity(readouts.len() + 1);
    out.push(start);
    let mut state = start;
    for ro in readouts.iter().rev() {
        state = retro_update(&state, &kraus_homodyne(cfg, ro)?)?;
        out.push(state);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dt: f64, theta: f64) -> SchemeConfig {
        SchemeConfig::new(Scheme::Homodyne, 1.0, dt).with_theta(theta)
    }

    #[test]
    fn excited_state_is_the_backward_fixed_point() {
        let e = RetroState(BlochVector::EXCITED);
        for r in [-3.0, 0.0, 0.4, 10.0] {
            let ks = kraus_homodyne(&cfg(0.01, 0.0), &Readout::Dyne { r }).unwrap();
            let next = retro_update(&e, &ks).unwrap();
            assert!(next.0.distance(&BlochVector::EXCITED) < 1e-15);
            assert_eq!(retro_rhs(&e, r, 0.0, 1.0), Vec3::zeros());
        }
    }

    #[test]
    fn one_step_from_the_mixed_state() {
        // M = pref·[[√0.99, 0], [0.01·1, 1]] at ε = dt = 0.01, r = 1;
        // M†(𝟙/2)M ∝ [[0.99 + 1e-4, 0.01], [0.01, 1]]
        let ks = kraus_homodyne(&cfg(0.01, 0.0), &Readout::Dyne { r: 1.0 }).unwrap();
        let q = retro_update(&RetroState(BlochVector::MIXED), &ks).unwrap().0;
        let (ee, gg, off) = (0.9901, 1.0, 0.01);
        let tr = ee + gg;
        assert!((q.z - (ee - gg) / tr).abs() < 1e-15);
        assert!((q.x - 2.0 * off / tr).abs() < 1e-15);
        assert!(q.y.abs() < 1e-15);
    }

    #[test]
    fn y_stays_zero_on_the_circle_at_theta_zero() {
        let s = RetroState(BlochVector::new(0.6, 0.0, -0.8));
        assert_eq!(retro_rhs(&s, 1.7, 0.0, 1.0)[1], 0.0);
    }

    #[test]
    fn rhs_is_the_small_step_limit_of_the_update() {
        let s = RetroState(BlochVector::new(0.3, -0.2, 0.5));
        let (r, theta) = (0.8, 0.6);
        let slope = |dt: f64| {
            let ks = kraus_homodyne(&cfg(dt, theta), &Readout::Dyne { r }).unwrap();
            (retro_update(&s, &ks).unwrap().0.to_vector() - s.0.to_vector()) / dt
        };
        let exact = retro_rhs(&s, r, theta, 1.0);
        let e1 = (slope(1e-4) - exact).amax();
        let e2 = (slope(5e-5) - exact).amax();
        assert!(e1 < 1e-3, "{e1}");
        // first-order convergence
        assert!((e1 / e2 - 2.0).abs() < 0.1, "{}", e1 / e2);
        let richardson = (slope(5e-5) * 2.0 - slope(1e-4) - exact).amax();
        assert!(richardson < 1e-7, "{richardson}");
    }

    #[test]
    fn rejects_other_schemes() {
        let het = SchemeConfig::new(Scheme::Heterodyne, 1.0, 1e-3);
        let ks = crate::measure::kraus_heterodyne(&het, &Readout::DualDyne { r_i: 0.0, r_q: 0.0 }).unwrap();
        assert!(retro_update(&RetroState(BlochVector::MIXED), &ks).is_err());
    }

    #[test]
    fn driven_records_are_not_retrodicted() {
        let driven = cfg(1e-3, 0.0).with_drive(0.5, 0.0);
        let ro = [Readout::Dyne { r: 0.1 }];
        assert!(retrodict(RetroState(BlochVector::MIXED), &ro, &driven).is_err());
    }
}
