//! Stochastic Hamiltonians for homodyne detection at θ = 0, with the readout
//! eliminated at its optimum.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochVector;
use crate::dynamics::kraus_rhs;
use crate::error::{config, Result};
use crate::measure::{log_prob_rate, Readout, Scheme, SchemeConfig};

pub type Coords<const N: usize> = SVector<f64, N>;

/// Coordinates and conjugate momenta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint<const N: usize> {
    pub q: Coords<N>,
    pub p: Coords<N>,
}

/// `(ϑ, p)` on the great circle of pure states.
pub type PolarPoint = PhasePoint<1>;
/// `(x, z; p_x, p_z)` in the y = 0 plane.
pub type PlanarPoint = PhasePoint<2>;

impl PolarPoint {
    pub fn polar(theta: f64, p: f64) -> Self {
        Self {
            q: Coords::<1>::new(theta),
            p: Coords::<1>::new(p),
        }
    }

    pub fn theta(&self) -> f64 {
        self.q[0]
    }

    pub fn momentum(&self) -> f64 {
        self.p[0]
    }
}

impl PlanarPoint {
    pub fn planar(x: f64, z: f64, p_x: f64, p_z: f64) -> Self {
        Self {
            q: Coords::<2>::new(x, z),
            p: Coords::<2>::new(p_x, p_z),
        }
    }
}

impl<const N: usize> PhasePoint<N> {
    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|v| v.is_finite())
    }
}

/// `H(q, p) = p·F(q, r⋆) + 𝒢(q, r⋆)`.
pub trait StochasticHamiltonian<const N: usize>: Sync {
    fn gamma(&self) -> f64;

    fn coordinate_names(&self) -> [&'static str; N];

    fn energy(&self, pt: &PhasePoint<N>) -> f64;

    /// `(∂H/∂q, ∂H/∂p)`.
    fn gradient(&self, pt: &PhasePoint<N>) -> (Coords<N>, Coords<N>);

    fn optimal_readout(&self, pt: &PhasePoint<N>) -> f64;

    fn state(&self, q: &Coords<N>) -> BlochVector;

    /// Scheme whose conditioned dynamics the flow follows.
    fn scheme_config(&self) -> SchemeConfig;

    /// `H − p·q̇`.
    fn action_rate(&self, pt: &PhasePoint<N>) -> f64 {
        let (_, q_dot) = self.gradient(pt);
        self.energy(pt) - pt.p.dot(&q_dot)
    }
}

fn check_homodyne_family(cfg: &SchemeConfig) -> Result<()> {
    cfg.validate()?;
    if !matches!(cfg.scheme, Scheme::Homodyne | Scheme::HomodyneInefficient) {
        return config(format!("optimal paths are implemented for homodyne only, not {}", cfg.scheme));
    }
    if cfg.theta != 0.0 {
        return config("optimal paths require the measured quadrature theta = 0");
    }
    if cfg.is_driven() {
        return config("optimal paths are implemented without a Rabi drive");
    }
    Ok(())
}

/// Ideal homodyne on the pure-state circle, `x = sin ϑ`, `z = cos ϑ`:
/// `H = p²A(ϑ) + pB(ϑ) + C(ϑ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarHamiltonian {
    pub gamma: f64,
}

impl PolarHamiltonian {
    pub fn new(gamma: f64) -> Self {
        Self { gamma }
    }

    pub fn from_config(cfg: &SchemeConfig) -> Result<Self> {
        check_homodyne_family(cfg)?;
        if cfg.eta != 1.0 {
            return config(format!(
                "pure-state optimal paths need eta = 1 (got {}); use the planar Hamiltonian",
                cfg.eta
            ));
        }
        Ok(Self::new(cfg.gamma))
    }

    /// `(A, B, C)` and their first and second ϑ-derivatives, indexed `[order][coefficient]`.
    fn coefficients(&self, theta: f64) -> [[f64; 3]; 3] {
        let g = self.gamma;
        let (s1, c1) = theta.sin_cos();
        let (s2, c2) = (2.0 * theta).sin_cos();
        [
            [
                g * (c1 + 0.25 * c2 + 0.75),
                g * (1.5 * s1 + 0.5 * s2),
                -g * (0.5 * c1 + 0.25 * c2 + 0.25),
            ],
            [
                -g * (s1 + 0.5 * s2),
                g * (1.5 * c1 + c2),
                g * (0.5 * s1 + 0.5 * s2),
            ],
            [
                -g * (c1 + c2),
                -g * (1.5 * s1 + 2.0 * s2),
                g * (0.5 * c1 + c2),
            ],
        ]
    }

    pub fn value(&self, theta: f64, p: f64) -> f64 {
        let [a, b, c] = self.coefficients(theta)[0];
        p * p * a + p * b + c
    }

    /// `(∂H/∂ϑ, ∂H/∂p)`.
    pub fn partials(&self, theta: f64, p: f64) -> (f64, f64) {
        let k = self.coefficients(theta);
        let [a, b, _] = k[0];
        let [da, db, dc] = k[1];
        (p * p * da + p * db + dc, 2.0 * p * a + b)
    }

    /// `[[H_ϑϑ, H_ϑp], [H_pϑ, H_pp]]`.
    pub fn hessian(&self, theta: f64, p: f64) -> [[f64; 2]; 2] {
        let k = self.coefficients(theta);
        let [a, _, _] = k[0];
        let [da, db, _] = k[1];
        let [dda, ddb, ddc] = k[2];
        let cross = 2.0 * p * da + db;
        [[p * p * dda + p * ddb + ddc, cross], [cross, 2.0 * a]]
    }

    /// `Ṡ = H − pϑ̇ = C − p²A`.
    pub fn action_rate_at(&self, theta: f64, p: f64) -> f64 {
        let [a, _, c] = self.coefficients(theta)[0];
        c - p * p * a
    }
}

impl StochasticHamiltonian<1> for PolarHamiltonian {
    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn coordinate_names(&self) -> [&'static str; 1] {
        ["theta"]
    }

    fn energy(&self, pt: &PolarPoint) -> f64 {
        self.value(pt.theta(), pt.momentum())
    }

    fn gradient(&self, pt: &PolarPoint) -> (Coords<1>, Coords<1>) {
        let (dq, dp) = self.partials(pt.theta(), pt.momentum());
        (Coords::<1>::new(dq), Coords::<1>::new(dp))
    }

    fn optimal_readout(&self, pt: &PolarPoint) -> f64 {
        let (s, c) = pt.theta().sin_cos();
        self.gamma.sqrt() * (s + pt.momentum() * (1.0 + c))
    }

    fn state(&self, q: &Coords<1>) -> BlochVector {
        let (s, c) = q[0].sin_cos();
        BlochVector::new(s, 0.0, c)
    }

    fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig::new(Scheme::Homodyne, self.gamma, 1e-3)
    }

    fn action_rate(&self, pt: &PolarPoint) -> f64 {
        self.action_rate_at(pt.theta(), pt.momentum())
    }
}

/// Homodyne with efficiency `η ∈ (0, 1]` in the `(x, z)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarHamiltonian {
    pub gamma: f64,
    pub eta: f64,
}

impl PlanarHamiltonian {
    pub fn new(gamma: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return config(format!("planar optimal paths need eta in (0, 1], got {eta}"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return config(format!("gamma must be positive, got {gamma}"));
        }
        Ok(Self { gamma, eta })
    }

    pub fn from_config(cfg: &SchemeConfig) -> Result<Self> {
        check_homodyne_family(cfg)?;
        Self::new(cfg.gamma, cfg.eta)
    }

    fn signal_gain(&self) -> f64 {
        (self.eta * self.gamma).sqrt()
    }

    /// Velocity `(ẋ, ż)` for an explicit readout `r`.
    pub fn velocity(&self, x: f64, z: f64, r: f64) -> (f64, f64) {
        let (g, eta, s) = (self.gamma, self.eta, self.signal_gain());
        (
            0.5 * g * x * (eta * (1.0 + z) - 1.0) + s * r * (1.0 + z - x * x),
            0.5 * g * (1.0 + z) * (eta * (1.0 + z) - 2.0) - s * r * x * (1.0 + z),
        )
    }

    /// `H` before eliminating the readout.
    pub fn with_readout(&self, pt: &PlanarPoint, r: f64) -> f64 {
        let (x, z) = (pt.q[0], pt.q[1]);
        let (fx, fz) = self.velocity(x, z, r);
        let s = self.signal_gain();
        pt.p[0] * fx + pt.p[1] * fz - 0.5 * (r - s * x).powi(2)
            + 0.5 * self.eta * self.gamma * (x * x - z - 1.0)
    }
}

impl StochasticHamiltonian<2> for PlanarHamiltonian {
    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn coordinate_names(&self) -> [&'static str; 2] {
        ["x", "z"]
    }

    fn energy(&self, pt: &PlanarPoint) -> f64 {
        self.with_readout(pt, self.optimal_readout(pt))
    }

    fn gradient(&self, pt: &PlanarPoint) -> (Coords<2>, Coords<2>) {
        let (x, z) = (pt.q[0], pt.q[1]);
        let (px, pz) = (pt.p[0], pt.p[1]);
        let (g, eta, s) = (self.gamma, self.eta, self.signal_gain());
        let r = self.optimal_readout(pt);
        let (fx, fz) = self.velocity(x, z, r);
        // ∂H/∂r vanishes at r⋆, so the readout is held fixed here
        let dx = px * (0.5 * g * (eta * (1.0 + z) - 1.0) - 2.0 * s * r * x) - pz * s * r * (1.0 + z)
            + s * (r - s * x)
            + eta * g * x;
        let dz = px * (0.5 * g * eta * x + s * r) + pz * (g * (eta * (1.0 + z) - 1.0) - s * r * x)
            - 0.5 * eta * g;
        (Coords::<2>::new(dx, dz), Coords::<2>::new(fx, fz))
    }

    fn optimal_readout(&self, pt: &PlanarPoint) -> f64 {
        let (x, z) = (pt.q[0], pt.q[1]);
        self.signal_gain() * (x + pt.p[0] * (1.0 + z - x * x) - pt.p[1] * x * (1.0 + z))
    }

    fn state(&self, q: &Coords<2>) -> BlochVector {
        BlochVector::new(q[0], 0.0, q[1])
    }

    fn scheme_config(&self) -> SchemeConfig {
        let scheme = if self.eta == 1.0 { Scheme::Homodyne } else { Scheme::HomodyneInefficient };
        SchemeConfig::new(scheme, self.gamma, 1e-3).with_eta(self.eta)
    }
}

/// `p·F + 𝒢` assembled from the conditioned equations of motion and the
/// readout log-density for an arbitrary readout `r`, with `p = (p_x, p_y, p_z)`.
pub fn composed_hamiltonian(
    q: &BlochVector,
    p: [f64; 3],
    r: f64,
    cfg: &SchemeConfig,
) -> Result<f64> {
    let ro = Readout::Dyne { r };
    let f = kraus_rhs(q, &ro, cfg)?;
    Ok(p[0] * f[0] + p[1] * f[1] + p[2] * f[2] + log_prob_rate(q, &ro, cfg)?)
}
