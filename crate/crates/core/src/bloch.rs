//! Qubit states as Bloch vectors and as 2x2 density matrices.
//!
//! Basis order is (excited, ground), so the excited state is `z = +1` and
//! `ρ = ½(𝟙 + xσx + yσy + zσz)`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on `|q| ≤ 1` before a vector is rejected.
pub const BALL_TOL: f64 = 1e-9;

/// Tolerance on hermiticity and trace of a density matrix.
pub const MATRIX_TOL: f64 = 1e-12;

pub type Mat2 = Matrix2<Complex64>;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const EXCITED: Self = Self::new(0.0, 0.0, 1.0);
    pub const GROUND: Self = Self::new(0.0, 0.0, -1.0);
    pub const MIXED: Self = Self::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Pure state on the y = 0 great circle at polar angle `theta`.
    pub fn on_circle(theta: f64) -> Self {
        Self::new(theta.sin(), 0.0, theta.cos())
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn norm_squared(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        0.5 * (1.0 + self.norm_squared())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_pure(&self) -> bool {
        (self.norm() - 1.0).abs() <= BALL_TOL
    }

    /// Checks ball membership. A norm in `(1, 1 + BALL_TOL]` is pulled back onto
    /// the sphere; anything further out is an error.
    pub fn checked(self) -> Result<Self> {
        if !self.is_finite() {
            return Err(Error::InvalidState(format!("non-finite Bloch vector {self}")));
        }
        let n = self.norm();
        if n > 1.0 + BALL_TOL {
            return Err(Error::InvalidState(format!(
                "Bloch vector {self} has norm {n} > 1"
            )));
        }
        Ok(if n > 1.0 { self.scaled(1.0 / n) } else { self })
    }

    pub fn scaled(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn polar(&self) -> PolarCoordinate {
        PolarCoordinate::from_xz(self.x, self.z)
    }

    /// Euclidean distance between Bloch vectors.
    pub fn distance(&self, other: &Self) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    pub fn to_density(self) -> Result<DensityMatrix> {
        bloch_to_density(self)
    }
}

impl std::ops::Neg for BlochVector {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for BlochVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Angle on the y = 0 great circle, measured from the excited state towards +x.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PolarCoordinate(f64);

impl PolarCoordinate {
    /// Wraps any finite angle into `(−π, π]`.
    pub fn new(theta: f64) -> Self {
        Self(wrap_angle(theta))
    }

    pub fn from_xz(x: f64, z: f64) -> Self {
        Self::new(x.atan2(z))
    }

    pub fn angle(self) -> f64 {
        self.0
    }

    pub fn to_bloch(self) -> BlochVector {
        BlochVector::on_circle(self.0)
    }
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let w = theta.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Signed difference `a − b` folded into `(−π, π]`.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Hermitian, unit-trace 2x2 matrix, indexed (e, g).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat2);

impl DensityMatrix {
    /// Wraps a matrix without checking it. Use [`validate_state`] or
    /// [`density_to_bloch`] to inspect it.
    pub fn from_matrix(m: Mat2) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn ee(&self) -> Complex64 {
        self.0[(0, 0)]
    }

    pub fn eg(&self) -> Complex64 {
        self.0[(0, 1)]
    }

    pub fn ge(&self) -> Complex64 {
        self.0[(1, 0)]
    }

    pub fn gg(&self) -> Complex64 {
        self.0[(1, 1)]
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    /// Bloch coordinates read straight off the entries, without validation.
    pub(crate) fn coords(&self) -> BlochVector {
        let ge = self.ge();
        BlochVector::new(2.0 * ge.re, 2.0 * ge.im, (self.ee() - self.gg()).re)
    }

    pub fn to_bloch(&self) -> Result<BlochVector> {
        density_to_bloch(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDiagnostics {
    pub hermiticity_deviation: f64,
    pub trace_deviation: f64,
    pub min_eigenvalue: f64,
    pub purity: f64,
}

impl StateDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.hermiticity_deviation <= MATRIX_TOL
            && self.trace_deviation <= MATRIX_TOL
            && self.min_eigenvalue >= -MATRIX_TOL
    }
}

pub fn bloch_to_density(q: BlochVector) -> Result<DensityMatrix> {
    let q = q.checked()?;
    Ok(DensityMatrix(Mat2::new(
        c(0.5 * (1.0 + q.z), 0.0),
        c(0.5 * q.x, -0.5 * q.y),
        c(0.5 * q.x, 0.5 * q.y),
        c(0.5 * (1.0 - q.z), 0.0),
    )))
}

pub fn density_to_bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    let d = validate_state(rho);
    if !d.hermiticity_deviation.is_finite() || d.hermiticity_deviation > MATRIX_TOL {
        return Err(Error::InvalidState(format!(
            "matrix is not Hermitian (deviation {:e})",
            d.hermiticity_deviation
        )));
    }
    if !d.trace_deviation.is_finite() || d.trace_deviation > MATRIX_TOL {
        return Err(Error::InvalidState(format!(
            "trace differs from 1 by {:e}",
            d.trace_deviation
        )));
    }
    // x = tr(σx ρ) = 2 Re ρ_ge, y = tr(σy ρ) = 2 Im ρ_ge once ρ is Hermitian;
    // average the off-diagonal pair so rounding asymmetry cancels.
    let off = 0.5 * (rho.ge() + rho.eg().conj());
    BlochVector::new(2.0 * off.re, 2.0 * off.im, (rho.ee() - rho.gg()).re).checked()
}

pub fn validate_state(rho: &DensityMatrix) -> StateDiagnostics {
    let m = rho.matrix();
    let herm = (m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
    let trace_dev = (m.trace() - c(1.0, 0.0)).norm();
    // eigenvalues of the Hermitian part
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)].conj());
    let half_gap = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
    let min_eig = 0.5 * (a + d) - half_gap;
    let purity = m.iter().map(|v| v.norm_sqr()).sum::<f64>();
    StateDiagnostics {
        hermiticity_deviation: herm,
        trace_deviation: trace_dev,
        min_eigenvalue: min_eig,
        purity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn excited_projector() {
        let rho = bloch_to_density(BlochVector::EXCITED).unwrap();
        assert_eq!(rho.ee(), c(1.0, 0.0));
        assert_eq!(rho.gg(), c(0.0, 0.0));
        assert_eq!(rho.eg(), c(0.0, 0.0));
    }

    #[test]
    fn plus_state_has_all_halves() {
        let rho = bloch_to_density(BlochVector::new(1.0, 0.0, 0.0)).unwrap();
        for v in rho.matrix().iter() {
            assert_eq!(*v, c(0.5, 0.0));
        }
    }

    #[test]
    fn maximally_mixed() {
        let rho = bloch_to_density(BlochVector::MIXED).unwrap();
        assert_abs_diff_eq!(validate_state(&rho).purity, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn reading_back_coordinates() {
        let g = DensityMatrix::from_matrix(Mat2::new(c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.)));
        assert_eq!(density_to_bloch(&g).unwrap(), BlochVector::GROUND);

        let plus_y = DensityMatrix::from_matrix(Mat2::new(
            c(0.5, 0.),
            c(0., -0.5),
            c(0., 0.5),
            c(0.5, 0.),
        ));
        let q = density_to_bloch(&plus_y).unwrap();
        assert_abs_diff_eq!(q.y, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.x, 0.0, epsilon = 1e-15);

        // tr(σx ρ) = 0.1 + 0.1 doubled, tr(σz ρ) = 0.65 − 0.35
        let m = DensityMatrix::from_matrix(Mat2::new(
            c(0.65, 0.),
            c(0.2, 0.),
            c(0.2, 0.),
            c(0.35, 0.),
        ));
        let q = density_to_bloch(&m).unwrap();
        assert_abs_diff_eq!(q.x, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(q.y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.z, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_matrices() {
        let not_herm = DensityMatrix::from_matrix(Mat2::new(
            c(0.5, 0.),
            c(0.2, 0.),
            c(0.1, 0.),
            c(0.5, 0.),
        ));
        assert!(matches!(density_to_bloch(&not_herm), Err(Error::InvalidState(_))));
        let bad_trace = DensityMatrix::from_matrix(Mat2::new(
            c(0.6, 0.),
            c(0., 0.),
            c(0., 0.),
            c(0.5, 0.),
        ));
        assert!(matches!(density_to_bloch(&bad_trace), Err(Error::InvalidState(_))));
    }

    #[test]
    fn ball_tolerance() {
        let just_out = BlochVector::new(0.0, 0.0, 1.0 + 0.5e-9);
        let fixed = just_out.checked().unwrap();
        assert_eq!(fixed.z, 1.0);
        assert!(BlochVector::new(0.0, 0.0, 1.0 + 1e-8).checked().is_err());
        assert!(BlochVector::new(f64::NAN, 0.0, 0.0).checked().is_err());
    }

    #[test]
    fn diagnostics_of_projector() {
        let d = validate_state(&bloch_to_density(BlochVector::EXCITED).unwrap());
        assert_eq!(d.purity, 1.0);
        assert_eq!(d.min_eigenvalue, 0.0);
        assert!(d.is_valid());
    }

    #[test]
    fn polar_convention() {
        assert_eq!(BlochVector::EXCITED.polar().angle(), 0.0);
        assert_eq!(BlochVector::GROUND.polar().angle(), PI);
        assert_eq!(BlochVector::new(-0.0, 0.0, -1.0).polar().angle(), PI);
        assert_abs_diff_eq!(
            BlochVector::new(-1.0, 0.0, 0.0).polar().angle(),
            -PI / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(-7.0), -7.0 + 2.0 * PI, epsilon = 1e-15);
        assert_abs_diff_eq!(angle_difference(-PI + 0.1, PI - 0.1), 0.2, epsilon = 1e-14);
    }
}
