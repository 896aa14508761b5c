//! Equations of motion in Bloch coordinates.
//!
//! Measurement channels are `L = ℓ·σ₋` with a complex coupling `ℓ`. A channel
//! monitored with efficiency `η` contributes the Itô diffusion column
//! `√η·B(ℓ)`, where `B` is the backaction `tr(σ·(Lρ + ρL† − ⟨L + L†⟩ρ))`.

use arrayvec::ArrayVec;
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bloch::BlochVector;
use crate::ensemble::Trajectory;
use crate::error::{config, Error, Result};
use crate::measure::{Readout, Scheme, SchemeConfig};

pub type Vec3 = Vector3<f64>;

/// Unmonitored decay: `(−γx/2, −γy/2, −γ(1+z))`.
pub fn lindblad_rhs(q: &BlochVector, gamma: f64) -> Vec3 {
    Vec3::new(-0.5 * gamma * q.x, -0.5 * gamma * q.y, -gamma * (1.0 + q.z))
}

/// Rotation generated by `δσz/2 + Ωσy/2`.
pub fn drive_rhs(q: &BlochVector, omega: f64, delta: f64) -> Vec3 {
    Vec3::new(omega * q.z - delta * q.y, delta * q.x, -omega * q.x)
}

/// Closed-form solution of [`lindblad_rhs`].
pub fn analytic_decay(q0: &BlochVector, t: f64, gamma: f64) -> BlochVector {
    let half = (-0.5 * gamma * t).exp();
    BlochVector::new(q0.x * half, q0.y * half, q0.z + (1.0 + q0.z) * (-gamma * t).exp_m1())
}

/// A monitored decay channel `L = coupling·σ₋`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Channel {
    pub label: &'static str,
    pub coupling: Complex64,
}

/// Measurement channels of a diffusive scheme. Photodetection has none.
pub fn channels(cfg: &SchemeConfig) -> Result<ArrayVec<Channel, 2>> {
    let phase = Complex64::from_polar(1.0, -cfg.theta);
    let mut out = ArrayVec::new();
    match cfg.scheme {
        Scheme::Photodetect => {
            return Err(Error::Unsupported(
                "a diffusive description of photodetection".into(),
            ))
        }
        Scheme::Homodyne | Scheme::HomodyneInefficient => out.push(Channel {
            label: "r",
            coupling: cfg.gamma.sqrt() * phase,
        }),
        Scheme::Heterodyne => {
            let k = (cfg.gamma / 2.0).sqrt() * phase;
            out.push(Channel { label: "r_i", coupling: k });
            out.push(Channel {
                label: "r_q",
                coupling: Complex64::i() * k,
            });
        }
    }
    Ok(out)
}

/// Backaction vector `B(ℓ)` for `L = ℓσ₋`.
pub fn backaction(q: &BlochVector, l: Complex64) -> Vec3 {
    let (lr, li) = (l.re, l.im);
    let (x, y, z) = (q.x, q.y, q.z);
    Vec3::new(
        lr * (1.0 + z - x * x) - li * x * y,
        li * (1.0 + z - y * y) - lr * x * y,
        -(1.0 + z) * (lr * x + li * y),
    )
}

/// Jacobian `∂Bᵢ/∂qⱼ` of [`backaction`].
pub fn backaction_jacobian(q: &BlochVector, l: Complex64) -> Matrix3<f64> {
    let (lr, li) = (l.re, l.im);
    let (x, y, z) = (q.x, q.y, q.z);
    Matrix3::new(
        -2.0 * lr * x - li * y,
        -li * x,
        lr,
        -lr * y,
        -2.0 * li * y - lr * x,
        li,
        -(1.0 + z) * lr,
        -(1.0 + z) * li,
        -(lr * x + li * y),
    )
}

/// Itô drift and diffusion columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiffusion {
    pub drift: Vec3,
    pub diffusion: ArrayVec<Vec3, 2>,
    pub labels: ArrayVec<&'static str, 2>,
}

impl DriftDiffusion {
    pub fn channel_count(&self) -> usize {
        self.diffusion.len()
    }
}

pub fn sme_coefficients(q: &BlochVector, cfg: &SchemeConfig) -> Result<DriftDiffusion> {
    let chans = channels(cfg)?;
    let drift = lindblad_rhs(q, cfg.gamma) + drive_rhs(q, cfg.omega, cfg.delta);
    let root_eta = cfg.eta.sqrt();
    Ok(DriftDiffusion {
        drift,
        diffusion: chans.iter().map(|ch| root_eta * backaction(q, ch.coupling)).collect(),
        labels: chans.iter().map(|ch| ch.label).collect(),
    })
}

/// Jacobians of the diffusion columns, in channel order.
pub fn diffusion_jacobians(q: &BlochVector, cfg: &SchemeConfig) -> Result<ArrayVec<Matrix3<f64>, 2>> {
    let root_eta = cfg.eta.sqrt();
    Ok(channels(cfg)?
        .iter()
        .map(|ch| root_eta * backaction_jacobian(q, ch.coupling))
        .collect())
}

/// Drift of the equivalent Stratonovich equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratonovichDrift(pub Vec3);

/// `A = a − ½ Σⱼ (bⱼ·∇) bⱼ`.
pub fn strato_drift(q: &BlochVector, cfg: &SchemeConfig) -> Result<StratonovichDrift> {
    let dd = sme_coefficients(q, cfg)?;
    let jac = diffusion_jacobians(q, cfg)?;
    let correction = dd
        .diffusion
        .iter()
        .zip(&jac)
        .fold(Vec3::zeros(), |acc, (b, j)| acc + j * b);
    Ok(StratonovichDrift(dd.drift - 0.5 * correction))
}

/// Readout-conditioned equations of motion obtained by expanding the Kraus
/// update to first order in `dt` with the readout held fixed.
///
/// Homodyne and its inefficient variant share one form; `η = 1` drops the
/// lost-photon terms.
pub fn kraus_rhs(q: &BlochVector, ro: &Readout, cfg: &SchemeConfig) -> Result<Vec3> {
    let phase = Complex64::from_polar(1.0, -cfg.theta);
    let kappa = match (cfg.scheme, *ro) {
        (Scheme::Homodyne | Scheme::HomodyneInefficient, Readout::Dyne { r }) => {
            (cfg.eta * cfg.gamma).sqrt() * r * phase
        }
        (Scheme::Heterodyne, Readout::DualDyne { r_i, r_q }) => {
            (cfg.eta * cfg.gamma / 2.0).sqrt() * phase * Complex64::new(r_i, r_q)
        }
        (Scheme::Photodetect, _) => {
            return Err(Error::Unsupported("a diffusive rhs for photodetection".into()))
        }
        (scheme, ro) => {
            return config(format!("readout {ro:?} does not belong to scheme {scheme}"))
        }
    };
    Ok(conditioned_rhs(q, kappa, cfg))
}

fn conditioned_rhs(q: &BlochVector, kappa: Complex64, cfg: &SchemeConfig) -> Vec3 {
    let (x, y, z) = (q.x, q.y, q.z);
    let (a, b) = (kappa.re, kappa.im);
    let g2 = 0.5 * cfg.gamma;
    let kept = cfg.eta * (1.0 + z);
    Vec3::new(
        g2 * x * (kept - 1.0) + a * (1.0 + z - x * x) - b * x * y,
        g2 * y * (kept - 1.0) + b * (1.0 + z - y * y) - a * x * y,
        g2 * (1.0 + z) * (kept - 2.0) - (1.0 + z) * (a * x + b * y),
    ) + drive_rhs(q, cfg.omega, cfg.delta)
}

/// Uniform grid `0, dt, 2dt, …` ending exactly at `t_final`; the last step may be short.
pub(crate) fn time_grid(t_final: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_final >= 0.0) || !t_final.is_finite() || !(dt > 0.0) || !dt.is_finite() {
        return config(format!("need t_final ≥ 0 and dt > 0 (got {t_final}, {dt})"));
    }
    let n = (t_final / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    times.push(t_final);
    Ok(times)
}

fn rk4_step<F: Fn(&Vec3) -> Vec3>(rhs: &F, q: &Vec3, h: f64) -> Vec3 {
    let k1 = rhs(q);
    let k2 = rhs(&(q + 0.5 * h * k1));
    let k3 = rhs(&(q + 0.5 * h * k2));
    let k4 = rhs(&(q + h * k3));
    q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Classical fourth-order Runge–Kutta.
pub fn integrate_deterministic<F>(rhs: F, q0: BlochVector, t_final: f64, dt: f64) -> Result<Trajectory>
where
    F: Fn(&Vec3) -> Vec3,
{
    let q0 = q0.checked()?;
    let times = time_grid(t_final, dt)?;
    let mut states = Vec::with_capacity(times.len());
    states.push(q0);
    let mut q = q0.to_vector();
    for (k, w) in times.windows(2).enumerate() {
        q = rk4_step(&rhs, &q, w[1] - w[0]);
        let s = BlochVector::from_vector(&q).checked().map_err(|e| Error::Integration {
            step: k + 1,
            reason: e.to_string(),
        })?;
        q = s.to_vector();
        states.push(s);
    }
    Ok(Trajectory::deterministic(times, states))
}

/// Euler–Maruyama on the Itô equations, drawing fresh Wiener increments from `rng`.
pub fn integrate_sme<R: Rng + ?Sized>(
    q0: BlochVector,
    cfg: &SchemeConfig,
    t_final: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    integrate_sme_with(q0, cfg, t_final, |_| {
        [rng.sample(StandardNormal), rng.sample(StandardNormal)]
    })
}

/// Euler–Maruyama driven by supplied standard normals, one pair per step
/// (`ΔWⱼ = √dt·nⱼ`; the second entry is ignored for single-channel schemes).
pub fn integrate_sme_with<F>(
    q0: BlochVector,
    cfg: &SchemeConfig,
    t_final: f64,
    mut normals: F,
) -> Result<Trajectory>
where
    F: FnMut(usize) -> [f64; 2],
{
    cfg.validate()?;
    if cfg.epsilon() > crate::measure::WEAK_EPSILON {
        return config(format!(
            "Euler-Maruyama needs gamma*dt <= {} (got {})",
            crate::measure::WEAK_EPSILON,
            cfg.epsilon()
        ));
    }
    let q0 = q0.checked()?;
    let times = time_grid(t_final, cfg.dt)?;
    let mut states = Vec::with_capacity(times.len());
    states.push(q0);
    let mut q = q0;
    for (k, w) in times.windows(2).enumerate() {
        let h = w[1] - w[0];
        let dd = sme_coefficients(&q, cfg)?;
        let n = normals(k);
        let mut next = q.to_vector() + dd.drift * h;
        for (b, nj) in dd.diffusion.iter().zip(n) {
            next += b * (h.sqrt() * nj);
        }
        let mut s = BlochVector::from_vector(&next);
        if !s.is_finite() {
            return Err(Error::Integration {
                step: k + 1,
                reason: "state became non-finite".into(),
            });
        }
        let norm = s.norm();
        if norm > 1.0 {
            s = s.scaled(1.0 / norm);
        }
        q = s;
        states.push(s);
    }
    let mut traj = Trajectory::deterministic(times, states);
    traj.scheme = Some(cfg.scheme);
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn hom() -> SchemeConfig {
        SchemeConfig::new(Scheme::Homodyne, 1.0, 1e-3)
    }

    #[test]
    fn lindblad_examples() {
        assert_eq!(lindblad_rhs(&BlochVector::GROUND, 1.0), Vec3::zeros());
        assert_eq!(lindblad_rhs(&BlochVector::EXCITED, 1.5), Vec3::new(0.0, 0.0, -3.0));
        assert_eq!(
            lindblad_rhs(&BlochVector::new(1.0, 0.0, 0.0), 2.0),
            Vec3::new(-1.0, 0.0, -2.0)
        );
    }

    #[test]
    fn decay_examples() {
        let q = analytic_decay(&BlochVector::new(1.0, 0.0, 0.0), 1.0, 1.0);
        assert_abs_diff_eq!(q.x, 0.60653, epsilon = 1e-5);
        assert_abs_diff_eq!(q.z, -0.63212, epsilon = 1e-5);
        let q0 = BlochVector::new(0.1, 0.2, 0.3);
        assert_eq!(analytic_decay(&q0, 0.0, 1.0), q0);
        let t = 0.7;
        assert_abs_diff_eq!(
            analytic_decay(&BlochVector::EXCITED, t, 1.0).z,
            2.0 * (-t).exp() - 1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn heterodyne_in_phase_column() {
        let q = BlochVector::new(0.3, -0.2, 0.4);
        let cfg = SchemeConfig::new(Scheme::Heterodyne, 2.0, 1e-3);
        let dd = sme_coefficients(&q, &cfg).unwrap();
        assert_eq!(dd.channel_count(), 2);
        assert_abs_diff_eq!(dd.diffusion[0][0], 1.0 * (1.0 + q.z - q.x * q.x), epsilon = 1e-15);
        assert_abs_diff_eq!(dd.diffusion[1][0], -q.x * q.y, epsilon = 1e-15);
    }

    #[test]
    fn ground_state_is_fixed() {
        for cfg in [hom(), SchemeConfig::new(Scheme::Heterodyne, 1.0, 1e-3).with_theta(0.3)] {
            let dd = sme_coefficients(&BlochVector::GROUND, &cfg).unwrap();
            assert_eq!(dd.drift, Vec3::zeros());
            assert!(dd.diffusion.iter().all(|b| b.norm() == 0.0));
            assert_eq!(strato_drift(&BlochVector::GROUND, &cfg).unwrap().0.norm(), 0.0);
            let ro = crate::measure::readout_signal(&BlochVector::new(0.5, 0.0, 0.0), &cfg);
            assert_eq!(kraus_rhs(&BlochVector::GROUND, &ro, &cfg).unwrap(), Vec3::zeros());
        }
    }

    #[test]
    fn blind_homodyne_has_no_diffusion() {
        let q = BlochVector::new(0.3, 0.1, -0.2);
        let dd = sme_coefficients(&q, &hom().with_eta(0.0)).unwrap();
        assert!(dd.diffusion[0].norm() == 0.0);
        assert_eq!(dd.drift, lindblad_rhs(&q, 1.0));
    }

    #[test]
    fn photodetection_has_no_diffusion_form() {
        let cfg = SchemeConfig::new(Scheme::Photodetect, 1.0, 1e-3);
        assert!(matches!(
            sme_coefficients(&BlochVector::EXCITED, &cfg),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn homodyne_kraus_equations_at_zero_phase() {
        let (x, z, r, om) = (0.4, 0.2, 1.7, 0.9);
        let q = BlochVector::new(x, 0.0, z);
        let cfg = hom().with_drive(om, 0.0);
        let v = kraus_rhs(&q, &Readout::Dyne { r }, &cfg).unwrap();
        assert_abs_diff_eq!(v[0], x * z / 2.0 + om * z + r * (1.0 + z - x * x), epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], (z * z - 1.0) / 2.0 - om * x - r * x * (1.0 + z), epsilon = 1e-15);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn stratonovich_drift_is_the_noise_free_kraus_form() {
        // At y = 0, θ = 0 the readout r = √γx + ξ enters as A + bξ, so A alone
        // equals the readout-conditioned equations evaluated at r = √γx.
        let (x, z) = (0.5, -0.3);
        let q = BlochVector::new(x, 0.0, z);
        let cfg = hom();
        let v = strato_drift(&q, &cfg).unwrap().0;
        assert_abs_diff_eq!(v[0], x * z / 2.0 + x * (1.0 + z - x * x), epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], (z * z - 1.0) / 2.0 - x * x * (1.0 + z), epsilon = 1e-15);
    }

    #[test]
    fn rk4_reaches_analytic_endpoint() {
        let traj = integrate_deterministic(|v| lindblad_rhs(&BlochVector::from_vector(v), 1.0),
            BlochVector::EXCITED, 5.0, 1e-3).unwrap();
        let end = traj.states.last().unwrap();
        let want = analytic_decay(&BlochVector::EXCITED, 5.0, 1.0);
        assert!((end.z - want.z).abs() < 1e-10);
        assert_eq!(traj.times.len(), 5001);
        assert_eq!(*traj.times.last().unwrap(), 5.0);
    }

    #[test]
    fn zero_rhs_is_constant() {
        let q0 = BlochVector::new(0.1, -0.2, 0.3);
        let traj = integrate_deterministic(|_| Vec3::zeros(), q0, 1.0, 0.1).unwrap();
        assert!(traj.states.iter().all(|s| *s == q0));
    }

    #[test]
    fn leaving_the_ball_is_an_error() {
        let err = integrate_deterministic(|_| Vec3::new(1.0, 0.0, 0.0), BlochVector::MIXED, 2.0, 0.1)
            .unwrap_err();
        assert!(matches!(err, Error::Integration { step: 11, .. }), "{err}");
    }

    #[test]
    fn euler_maruyama_requires_weak_regime() {
        let cfg = SchemeConfig::new(Scheme::Homodyne, 1.0, 0.05);
        assert!(integrate_sme_with(BlochVector::EXCITED, &cfg, 1.0, |_| [0.0; 2]).is_err());
    }

    #[test]
    fn blind_sme_is_euler_on_lindblad() {
        let cfg = hom().with_eta(0.0);
        let traj = integrate_sme_with(BlochVector::EXCITED, &cfg, 1.0, |_| [3.0, -3.0]).unwrap();
        let end = traj.states.last().unwrap();
        assert_abs_diff_eq!(end.z, 2.0 * (1.0 - 1e-3_f64).powi(1000) - 1.0, epsilon = 1e-12);
    }
}
