//! Distances between qubit states, used for post-selection windows and path extraction.

use crate::bloch::BlochVector;

pub trait DistanceMeasure: Send + Sync {
    fn name(&self) -> &'static str;

    fn distance(&self, a: &BlochVector, b: &BlochVector) -> f64;

    /// Path extraction sums distances in both directions, so it only accepts
    /// measures for which `D(a, b) = D(b, a)`.
    fn is_symmetric(&self) -> bool {
        true
    }
}

/// `½‖a − b‖`, the trace distance of the density matrices.
#[derive(Debug, Clone, Copy, Default)]
pub struct TraceDistance;

impl DistanceMeasure for TraceDistance {
    fn name(&self) -> &'static str {
        "trace"
    }

    fn distance(&self, a: &BlochVector, b: &BlochVector) -> f64 {
        0.5 * a.distance(b)
    }
}

/// Uhlmann fidelity of two qubit states.
pub fn fidelity(a: &BlochVector, b: &BlochVector) -> f64 {
    let overlap = 0.5 * (1.0 + a.x * b.x + a.y * b.y + a.z * b.z);
    let dets = ((1.0 - a.norm_squared()).max(0.0) * (1.0 - b.norm_squared()).max(0.0)).sqrt();
    (overlap + 0.5 * dets).clamp(0.0, 1.0)
}

/// `√(2(1 − √F))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuresDistance;

impl DistanceMeasure for BuresDistance {
    fn name(&self) -> &'static str {
        "bures"
    }

    fn distance(&self, a: &BlochVector, b: &BlochVector) -> f64 {
        (2.0 * (1.0 - fidelity(a, b).sqrt())).max(0.0).sqrt()
    }
}

/// `arccos √F`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FidelityAngle;

impl DistanceMeasure for FidelityAngle {
    fn name(&self) -> &'static str {
        "fidelity-angle"
    }

    fn distance(&self, a: &BlochVector, b: &BlochVector) -> f64 {
        fidelity(a, b).sqrt().clamp(0.0, 1.0).acos()
    }
}

/// Looks a measure up by the name it reports.
pub fn by_name(name: &str) -> Option<Box<dyn DistanceMeasure>> {
    match name {
        "trace" => Some(Box::new(TraceDistance)),
        "bures" => Some(Box::new(BuresDistance)),
        "fidelity-angle" => Some(Box::new(FidelityAngle)),
        _ => None,
    }
}
