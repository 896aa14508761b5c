//! Kraus operators for each monitoring scheme, conditioned updates, readout
//! sampling and POVM checks.
//!
//! Matrices are in the (excited, ground) basis. `ε = γ·dt` throughout.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use arrayvec::ArrayVec;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bloch::{c, BlochVector, DensityMatrix, Mat2};
use crate::error::{config, Error, Result};
use crate::quadrature::GaussHermite;

/// Largest `γ·dt` still treated as a weak measurement.
pub const WEAK_EPSILON: f64 = 0.01;

/// Quadrature order per readout axis in [`povm_completeness`].
pub const POVM_NODES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Photodetect,
    Heterodyne,
    Homodyne,
    HomodyneInefficient,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Photodetect,
        Scheme::Heterodyne,
        Scheme::Homodyne,
        Scheme::HomodyneInefficient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Photodetect => "photodetect",
            Scheme::Heterodyne => "heterodyne",
            Scheme::Homodyne => "homodyne",
            Scheme::HomodyneInefficient => "homodyne-inefficient",
        }
    }

    pub fn is_diffusive(self) -> bool {
        !matches!(self, Scheme::Photodetect)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "photodetect" | "photodetection" | "jump" => Ok(Scheme::Photodetect),
            "heterodyne" | "het" => Ok(Scheme::Heterodyne),
            "homodyne" | "hom" => Ok(Scheme::Homodyne),
            "homodyne-inefficient" | "inefficient" => Ok(Scheme::HomodyneInefficient),
            other => config(format!("unknown scheme '{other}'")),
        }
    }
}

/// Monitoring scheme plus the physical parameters of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Decay rate.
    pub gamma: f64,
    /// Time step.
    pub dt: f64,
    /// Local-oscillator phase.
    #[serde(default)]
    pub theta: f64,
    /// Detection efficiency.
    #[serde(default = "one")]
    pub eta: f64,
    /// Rabi frequency of the σy drive.
    #[serde(default)]
    pub omega: f64,
    /// Detuning (σz term).
    #[serde(default)]
    pub delta: f64,
}

fn one() -> f64 {
    1.0
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, gamma: f64, dt: f64) -> Self {
        Self {
            scheme,
            gamma,
            dt,
            theta: 0.0,
            eta: 1.0,
            omega: 0.0,
            delta: 0.0,
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_drive(mut self, omega: f64, delta: f64) -> Self {
        self.omega = omega;
        self.delta = delta;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.gamma * self.dt
    }

    pub fn is_weak(&self) -> bool {
        self.epsilon() <= WEAK_EPSILON
    }

    pub fn is_driven(&self) -> bool {
        self.omega != 0.0 || self.delta != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.gamma, self.dt, self.theta, self.eta, self.omega, self.delta]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return config("parameters must be finite");
        }
        if self.gamma <= 0.0 || self.dt <= 0.0 {
            return config(format!(
                "gamma and dt must be positive (gamma = {}, dt = {})",
                self.gamma, self.dt
            ));
        }
        let eps = self.epsilon();
        if eps >= 1.0 {
            return config(format!("gamma*dt = {eps} must be below 1"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return config(format!("efficiency {} outside [0, 1]", self.eta));
        }
        Ok(())
    }

    fn require(&self, scheme: Scheme) -> Result<()> {
        self.validate()?;
        if self.scheme != scheme {
            return config(format!("expected scheme {scheme}, got {}", self.scheme));
        }
        Ok(())
    }

    fn require_ideal(&self) -> Result<()> {
        if self.eta != 1.0 {
            return config(format!(
                "{} Kraus operators describe ideal detection; use {} for eta = {}",
                self.scheme,
                Scheme::HomodyneInefficient,
                self.eta
            ));
        }
        Ok(())
    }
}

/// One measurement record entry for a time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Readout {
    Jump { clicked: bool },
    Dyne { r: f64 },
    DualDyne { r_i: f64, r_q: f64 },
}

impl Readout {
    pub fn is_finite(&self) -> bool {
        match *self {
            Readout::Jump { .. } => true,
            Readout::Dyne { r } => r.is_finite(),
            Readout::DualDyne { r_i, r_q } => r_i.is_finite() && r_q.is_finite(),
        }
    }

    pub fn matches(&self, scheme: Scheme) -> bool {
        matches!(
            (self, scheme),
            (Readout::Jump { .. }, Scheme::Photodetect)
                | (Readout::DualDyne { .. }, Scheme::Heterodyne)
                | (Readout::Dyne { .. }, Scheme::Homodyne | Scheme::HomodyneInefficient)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausOp {
    pub label: &'static str,
    pub matrix: Mat2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    pub scheme: Scheme,
    pub ops: ArrayVec<KrausOp, 2>,
}

impl KrausSet {
    fn single(scheme: Scheme, label: &'static str, matrix: Mat2) -> Self {
        let mut ops = ArrayVec::new();
        ops.push(KrausOp { label, matrix });
        Self { scheme, ops }
    }

    fn pair(scheme: Scheme, a: KrausOp, b: KrausOp) -> Self {
        let mut ops = ArrayVec::new();
        ops.push(a);
        ops.push(b);
        Self { scheme, ops }
    }

    /// `Σ M†M` over the operators in the set.
    pub fn effect(&self) -> Mat2 {
        self.ops
            .iter()
            .map(|op| op.matrix.adjoint() * op.matrix)
            .fold(Mat2::zeros(), |acc, m| acc + m)
    }
}

/// Which Kraus operators of a set enter an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// The single operator with this index.
    Outcome(usize),
    /// Sum over every operator in the set.
    All,
}

impl Branch {
    pub const NO_CLICK: Branch = Branch::Outcome(0);
    pub const CLICK: Branch = Branch::Outcome(1);

    pub fn for_readout(ro: &Readout) -> Self {
        match ro {
            Readout::Jump { clicked } => Branch::Outcome(usize::from(*clicked)),
            _ => Branch::All,
        }
    }
}

pub fn kraus_photodetect(cfg: &SchemeConfig) -> Result<KrausSet> {
    cfg.validate()?;
    let eps = cfg.epsilon();
    Ok(KrausSet::pair(
        Scheme::Photodetect,
        KrausOp {
            label: "no-click",
            matrix: Mat2::new(c((1.0 - eps).sqrt(), 0.0), c(0., 0.), c(0., 0.), c(1., 0.)),
        },
        KrausOp {
            label: "click",
            matrix: Mat2::new(c(0., 0.), c(0., 0.), c(eps.sqrt(), 0.0), c(0., 0.)),
        },
    ))
}

/// Lower-left entry shared by the diffusive operators, before the Gaussian envelope.
fn dyne_operator(eps: f64, lower: Complex64) -> Mat2 {
    Mat2::new(c((1.0 - eps).sqrt(), 0.0), c(0., 0.), lower, c(1., 0.))
}

fn heterodyne_core(cfg: &SchemeConfig, r_i: f64, r_q: f64) -> (Mat2, f64) {
    let eps = cfg.epsilon();
    let alpha = (cfg.dt / 2.0).sqrt() * Complex64::from_polar(1.0, cfg.theta) * c(r_i, -r_q);
    (dyne_operator(eps, eps.sqrt() * alpha.conj()), alpha.norm_sqr())
}

pub fn kraus_heterodyne(cfg: &SchemeConfig, ro: &Readout) -> Result<KrausSet> {
    cfg.require(Scheme::Heterodyne)?;
    cfg.require_ideal()?;
    let Readout::DualDyne { r_i, r_q } = *ro else {
        return config(format!("heterodyne needs a two-quadrature readout, got {ro:?}"));
    };
    let (k, a2) = heterodyne_core(cfg, r_i, r_q);
    Ok(KrausSet::single(Scheme::Heterodyne, "alpha", k * c((-0.5 * a2).exp(), 0.0)))
}

fn homodyne_core(cfg: &SchemeConfig, r: f64, eta: f64) -> Mat2 {
    let lower = cfg.dt * (cfg.gamma * eta).sqrt() * r * Complex64::from_polar(1.0, -cfg.theta);
    dyne_operator(cfg.epsilon(), lower)
}

pub fn kraus_homodyne(cfg: &SchemeConfig, ro: &Readout) -> Result<KrausSet> {
    cfg.require(Scheme::Homodyne)?;
    cfg.require_ideal()?;
    let Readout::Dyne { r } = *ro else {
        return config(format!("homodyne needs a single-quadrature readout, got {ro:?}"));
    };
    let scale = (cfg.dt / (2.0 * PI)).powf(0.25) * (-r * r * cfg.dt / 4.0).exp();
    Ok(KrausSet::single(
        Scheme::Homodyne,
        "x",
        homodyne_core(cfg, r, 1.0) * c(scale, 0.0),
    ))
}

fn lost_photon(cfg: &SchemeConfig) -> Mat2 {
    let v = (cfg.epsilon() * (1.0 - cfg.eta)).sqrt();
    Mat2::new(c(0., 0.), c(0., 0.), c(v, 0.), c(0., 0.))
}

/// Pair of operators for homodyne detection behind a beamsplitter of
/// transmission `η`: the detected port (`x0`) and the lost photon (`x1`).
pub fn kraus_homodyne_inefficient(cfg: &SchemeConfig, ro: &Readout) -> Result<KrausSet> {
    cfg.require(Scheme::HomodyneInefficient)?;
    let Readout::Dyne { r } = *ro else {
        return config(format!("homodyne needs a single-quadrature readout, got {ro:?}"));
    };
    let big_x = (cfg.dt / 2.0).sqrt() * r;
    let g = c((-0.5 * big_x * big_x).exp(), 0.0);
    Ok(KrausSet::pair(
        Scheme::HomodyneInefficient,
        KrausOp {
            label: "x0",
            matrix: homodyne_core(cfg, r, cfg.eta) * g,
        },
        KrausOp {
            label: "x1",
            matrix: lost_photon(cfg) * g,
        },
    ))
}

/// Kraus set matching `cfg.scheme` for one readout.
pub fn kraus_for(cfg: &SchemeConfig, ro: &Readout) -> Result<KrausSet> {
    match cfg.scheme {
        Scheme::Photodetect => {
            if !matches!(ro, Readout::Jump { .. }) {
                return config(format!("photodetection needs a click readout, got {ro:?}"));
            }
            kraus_photodetect(cfg)
        }
        Scheme::Heterodyne => kraus_heterodyne(cfg, ro),
        Scheme::Homodyne => kraus_homodyne(cfg, ro),
        Scheme::HomodyneInefficient => kraus_homodyne_inefficient(cfg, ro),
    }
}

/// `ρ' = Σ M ρ M† / tr(·)` over the selected operators.
pub fn apply_update(rho: &DensityMatrix, ks: &KrausSet, branch: Branch) -> Result<DensityMatrix> {
    let m = rho.matrix();
    let acc = match branch {
        Branch::Outcome(i) => {
            if ks.scheme == Scheme::HomodyneInefficient {
                return config("the inefficient homodyne update always sums both operators");
            }
            let op = ks.ops.get(i).ok_or_else(|| {
                Error::Config(format!("branch {i} out of range for {} operators", ks.ops.len()))
            })?;
            op.matrix * m * op.matrix.adjoint()
        }
        Branch::All => ks
            .ops
            .iter()
            .map(|op| op.matrix * m * op.matrix.adjoint())
            .fold(Mat2::zeros(), |acc, t| acc + t),
    };
    normalized(acc, || format!("{branch:?} of {}", ks.scheme))
}

pub(crate) fn normalized(acc: Mat2, what: impl FnOnce() -> String) -> Result<DensityMatrix> {
    let tr = acc.trace().re;
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::ImpossibleOutcome(format!(
            "{} has probability weight {tr}",
            what()
        )));
    }
    let out = acc.unscale(tr);
    Ok(DensityMatrix::from_matrix((out + out.adjoint()) * c(0.5, 0.0)))
}

/// `exp(−i(δσz + Ωσy)dt/2)` in closed form.
pub fn drive_unitary(cfg: &SchemeConfig) -> Mat2 {
    let rate = cfg.omega.hypot(cfg.delta);
    if rate == 0.0 {
        return Mat2::identity();
    }
    let half = 0.5 * rate * cfg.dt;
    let (s, co) = half.sin_cos();
    let (ny, nz) = (cfg.omega / rate, cfg.delta / rate);
    Mat2::new(c(co, -s * nz), c(-s * ny, 0.0), c(s * ny, 0.0), c(co, s * nz))
}

/// Applies `U ρ U†`.
pub fn apply_unitary(rho: &DensityMatrix, u: &Mat2) -> DensityMatrix {
    let out = u * rho.matrix() * u.adjoint();
    DensityMatrix::from_matrix((out + out.adjoint()) * c(0.5, 0.0))
}

/// Noise-free readout: the conditional mean of each record channel.
pub fn readout_signal(q: &BlochVector, cfg: &SchemeConfig) -> Readout {
    let (s, co) = cfg.theta.sin_cos();
    let in_phase = q.x * co - q.y * s;
    match cfg.scheme {
        Scheme::Photodetect => Readout::Jump { clicked: false },
        Scheme::Heterodyne => {
            let k = (cfg.eta * cfg.gamma / 2.0).sqrt();
            Readout::DualDyne {
                r_i: k * in_phase,
                r_q: k * (q.y * co + q.x * s),
            }
        }
        Scheme::Homodyne | Scheme::HomodyneInefficient => Readout::Dyne {
            r: (cfg.eta * cfg.gamma).sqrt() * in_phase,
        },
    }
}

/// `℘(click) = γ·dt·(1+z)/2`.
pub fn click_probability(q: &BlochVector, cfg: &SchemeConfig) -> f64 {
    (cfg.epsilon() * 0.5 * (1.0 + q.z)).clamp(0.0, 1.0)
}

/// Draws the next readout from the O(dt) statistics of the current state.
pub fn sample_readout<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Readout {
    sample_from(&rho.coords(), cfg, rng)
}

pub(crate) fn sample_from<R: Rng + ?Sized>(
    q: &BlochVector,
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Readout {
    let sd = cfg.dt.sqrt().recip();
    match readout_signal(q, cfg) {
        Readout::Jump { .. } => Readout::Jump {
            clicked: rng.random::<f64>() < click_probability(q, cfg),
        },
        Readout::Dyne { r } => Readout::Dyne {
            r: r + sd * rng.sample::<f64, _>(StandardNormal),
        },
        Readout::DualDyne { r_i, r_q } => Readout::DualDyne {
            r_i: r_i + sd * rng.sample::<f64, _>(StandardNormal),
            r_q: r_q + sd * rng.sample::<f64, _>(StandardNormal),
        },
    }
}

/// O(dt) coefficient of the log readout density, `ln ℘(r|ρ) = C + 𝒢·dt + O(dt²)`.
pub fn log_prob_rate(q: &BlochVector, ro: &Readout, cfg: &SchemeConfig) -> Result<f64> {
    let eg = cfg.eta * cfg.gamma;
    match (cfg.scheme, *ro) {
        (Scheme::Photodetect, _) => Err(Error::Unsupported(
            "a log-probability rate for photodetection".into(),
        )),
        (Scheme::Heterodyne, Readout::DualDyne { r_i, r_q }) => {
            let Readout::DualDyne { r_i: si, r_q: sq } = readout_signal(q, cfg) else {
                unreachable!()
            };
            Ok(-0.5 * (r_i - si).powi(2) - 0.5 * (r_q - sq).powi(2)
                + eg / 4.0 * (q.x * q.x + q.y * q.y)
                - eg / 2.0 * (q.z + 1.0))
        }
        (Scheme::Homodyne | Scheme::HomodyneInefficient, Readout::Dyne { r }) => {
            let (s, co) = cfg.theta.sin_cos();
            let w = q.x * co - q.y * s;
            Ok(-0.5 * (r - eg.sqrt() * w).powi(2) + 0.5 * eg * (w * w - q.z - 1.0))
        }
        (scheme, ro) => config(format!("readout {ro:?} does not belong to scheme {scheme}")),
    }
}

/// Result of integrating `M†M` over all outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PovmReport {
    /// Largest entry of `|S/c − 𝟙|`.
    pub deviation: f64,
    /// Proportionality constant `c = tr(S)/2`; 1 for a normalized POVM.
    pub scale: f64,
    /// Whether the deviation is measured against the fitted `c·𝟙`.
    pub fitted: bool,
}

/// Sums or integrates `M†M` over outcomes and compares with the identity.
///
/// Dyne integrals use Gauss–Hermite quadrature in `s = r·√(dt/2)`, where the
/// Gaussian envelope becomes the quadrature weight. The inefficient operators
/// integrate to a multiple of the identity; that multiple is fitted and reported.
pub fn povm_completeness(cfg: &SchemeConfig) -> Result<PovmReport> {
    cfg.validate()?;
    let to_r = (2.0 / cfg.dt).sqrt();
    let gh = GaussHermite::new(POVM_NODES);
    let (sum, fitted) = match cfg.scheme {
        Scheme::Photodetect => (kraus_photodetect(cfg)?.effect(), false),
        Scheme::Homodyne => {
            cfg.require_ideal()?;
            let mut s = Mat2::zeros();
            for (&x, &w) in gh.nodes.iter().zip(&gh.weights) {
                let k = homodyne_core(cfg, to_r * x, 1.0);
                s += k.adjoint() * k * c(w, 0.0);
            }
            // (dt/2π)^{1/2} dr = π^{-1/2} ds
            (s.unscale(PI.sqrt()), false)
        }
        Scheme::Heterodyne => {
            cfg.require_ideal()?;
            let mut s = Mat2::zeros();
            for (&a, &wa) in gh.nodes.iter().zip(&gh.weights) {
                for (&b, &wb) in gh.nodes.iter().zip(&gh.weights) {
                    let (k, _) = heterodyne_core(cfg, to_r * a, to_r * b);
                    s += k.adjoint() * k * c(wa * wb, 0.0);
                }
            }
            // (dt/2π) dr_I dr_Q = π^{-1} ds_I ds_Q
            (s.unscale(PI), false)
        }
        Scheme::HomodyneInefficient => {
            let lost = lost_photon(cfg);
            let lost = lost.adjoint() * lost;
            let mut s = Mat2::zeros();
            for (&x, &w) in gh.nodes.iter().zip(&gh.weights) {
                let k = homodyne_core(cfg, to_r * x, cfg.eta);
                s += (k.adjoint() * k + lost) * c(w, 0.0);
            }
            (s * c(to_r, 0.0), true)
        }
    };
    let scale = if fitted { 0.5 * sum.trace().re } else { 1.0 };
    let deviation = (sum.unscale(scale) - Mat2::identity())
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    Ok(PovmReport {
        deviation,
        scale,
        fitted,
    })
}
