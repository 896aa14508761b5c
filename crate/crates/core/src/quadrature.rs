//! Gauss–Hermite quadrature, used to integrate Kraus products over continuous readouts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights for `∫ f(x) e^{−x²} dx ≈ Σ wᵢ f(xᵢ)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes from the eigenvalues of the Jacobi matrix, polished by Newton
    /// steps on the normalized Hermite recurrence, which also yields the weights.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite needs at least one node");
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (0.5 * i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| b.total_cmp(a));
        let scale = (2.0 * n as f64).sqrt();
        let mut weights = Vec::with_capacity(n);
        for z in nodes.iter_mut() {
            for _ in 0..3 {
                let (p1, p2) = hermite_pair(n, *z);
                *z -= p1 / (scale * p2);
            }
            let (_, p2) = hermite_pair(n, *z);
            weights.push(2.0 / (scale * p2).powi(2));
        }
        // enforce exact symmetry
        for i in 0..n / 2 {
            let (a, b) = (nodes[i], -nodes[n - 1 - i]);
            let m = 0.5 * (a + b);
            nodes[i] = m;
            nodes[n - 1 - i] = -m;
            let w = 0.5 * (weights[i] + weights[n - 1 - i]);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// `∫ f(x) e^{−x²} dx`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Orthonormal Hermite functions without the Gaussian factor, (pₙ, pₙ₋₁) at `z`.
fn hermite_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn low_order_moments() {
        for n in [1, 2, 5, 20, 200] {
            let gh = GaussHermite::new(n);
            assert_relative_eq!(gh.integrate(|_| 1.0), PI.sqrt(), max_relative = 1e-13);
            if n >= 2 {
                assert_relative_eq!(gh.integrate(|x| x * x), PI.sqrt() / 2.0, max_relative = 1e-12);
            }
            assert!(gh.integrate(|x| x).abs() < 1e-13);
        }
    }

    #[test]
    fn two_point_rule() {
        let gh = GaussHermite::new(2);
        assert_relative_eq!(gh.nodes[0], 0.5_f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gh.weights[0], PI.sqrt() / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn nodes_are_sorted_and_distinct() {
        let gh = GaussHermite::new(200);
        for w in gh.nodes.windows(2) {
            assert!(w[0] > w[1]);
        }
        assert!(gh.weights.iter().all(|&w| w > 0.0 && w.is_finite()));
    }

    #[test]
    fn gaussian_with_shift() {
        // ∫ e^{−x²} e^{2bx} dx = √π e^{b²}
        let gh = GaussHermite::new(200);
        let b = 1.3;
        assert_relative_eq!(
            gh.integrate(|x| (2.0 * b * x).exp()),
            PI.sqrt() * (b * b).exp(),
            max_relative = 1e-12
        );
    }
}
