//! Lagrangian manifold: every optimal path leaving one state, indexed by its
//! initial momenta.

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

use super::flow::flow_samples;
use super::hamiltonian::{Coords, PhasePoint, StochasticHamiltonian};

/// Square lattice `n × n` over `[−extent, extent]²`.
pub fn momentum_grid(extent: f64, n: usize) -> Vec<[f64; 2]> {
    if n == 1 {
        return vec![[0.0, 0.0]];
    }
    let axis: Vec<f64> = (0..n)
        .map(|k| -extent + 2.0 * extent * k as f64 / (n - 1) as f64)
        .collect();
    axis.iter()
        .flat_map(|&a| axis.iter().map(move |&b| [a, b]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSample {
    pub time: f64,
    pub p_initial: [f64; 2],
    pub q: [f64; 2],
    pub p: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFlow {
    pub p_initial: [f64; 2],
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianManifold {
    pub q_initial: [f64; 2],
    pub times: Vec<f64>,
    pub samples: Vec<ManifoldSample>,
    pub dropped: Vec<DroppedFlow>,
}

impl LagrangianManifold {
    pub fn at_time(&self, t: f64) -> impl Iterator<Item = &ManifoldSample> {
        self.samples.iter().filter(move |s| s.time == t)
    }
}

/// Flows every grid momentum from `q0` and records the projection onto the
/// coordinates at each of `times`. Diverging flows are dropped with a note.
pub fn propagate_lm<H: StochasticHamiltonian<2>>(
    h: &H,
    q0: [f64; 2],
    grid: &[[f64; 2]],
    times: &[f64],
    dt: f64,
) -> Result<LagrangianManifold> {
    if times.windows(2).any(|w| w[0] > w[1]) || times.first().is_some_and(|&t| t < 0.0) {
        return config("manifold times must be ascending and non-negative");
    }
    let results: Vec<std::result::Result<Vec<ManifoldSample>, DroppedFlow>> = grid
        .par_iter()
        .map(|&p0| {
            let start = PhasePoint {
                q: Coords::<2>::new(q0[0], q0[1]),
                p: Coords::<2>::new(p0[0], p0[1]),
            };
            match flow_samples(h, start, times, dt) {
                Ok(points) => Ok(times
                    .iter()
                    .zip(points)
                    .map(|(&time, pt)| ManifoldSample {
                        time,
                        p_initial: p0,
                        q: [pt.q[0], pt.q[1]],
                        p: [pt.p[0], pt.p[1]],
                    })
                    .collect()),
                Err(e) => Err(DroppedFlow {
                    p_initial: p0,
                    reason: e.to_string(),
                }),
            }
        })
        .collect();
    let mut samples = Vec::new();
    let mut dropped = Vec::new();
    for r in results {
        match r {
            Ok(s) => samples.extend(s),
            Err(d) => {
                debug!("dropped manifold point {:?}: {}", d.p_initial, d.reason);
                dropped.push(d);
            }
        }
    }
    Ok(LagrangianManifold {
        q_initial: q0,
        times: times.to_vec(),
        samples,
        dropped,
    })
}
