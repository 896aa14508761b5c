//! Phase portrait of the pure-state Hamiltonian: level sets, the `Ṡ` field,
//! stationary points and the regions cut out by the separatrices.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::wrap_angle;
use crate::contour::{contour, Grid2, Polyline};
use crate::error::{config, Result};

use super::hamiltonian::PolarHamiltonian;

/// Components smaller than this fraction of the grid are dropped as
/// discretization debris where two separatrices meet at a small angle.
pub const MIN_REGION_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitSpec {
    pub theta_range: (f64, f64),
    pub p_range: (f64, f64),
    pub theta_cells: usize,
    pub p_cells: usize,
    /// Extra contour levels in units of γ; the separatrix levels are always added.
    pub levels: Vec<f64>,
    /// Radius, in cells, of the disk blanked around each stationary point when
    /// counting regions.
    pub saddle_radius: f64,
}

impl Default for PortraitSpec {
    fn default() -> Self {
        Self {
            theta_range: (-PI, PI),
            p_range: (-3.0, 3.0),
            theta_cells: 400,
            p_cells: 200,
            levels: vec![-2.0, -1.5, -0.5, 0.5, 1.0, 2.0, 4.0],
            saddle_radius: 3.0,
        }
    }
}

impl PortraitSpec {
    fn validate(&self) -> Result<()> {
        let (a, b) = self.theta_range;
        let (c, d) = self.p_range;
        if ![a, b, c, d].iter().all(|v| v.is_finite()) || a >= b || c >= d {
            return config("portrait ranges must be finite and increasing");
        }
        if self.theta_cells < 4 || self.p_cells < 4 {
            return config("portrait grid needs at least 4 cells per axis");
        }
        Ok(())
    }

    fn periodic(&self) -> bool {
        (self.theta_range.1 - self.theta_range.0 - 2.0 * PI).abs() < 1e-9
    }

    fn symmetric(&self) -> bool {
        (self.theta_range.0 + self.theta_range.1).abs() < 1e-12
            && (self.p_range.0 + self.p_range.1).abs() < 1e-12
    }

    /// Cell-centred sample coordinates.
    pub fn axes(&self) -> (Vec<f64>, Vec<f64>) {
        let centres = |(a, b): (f64, f64), n: usize| -> Vec<f64> {
            let h = (b - a) / n as f64;
            (0..n).map(|k| a + (k as f64 + 0.5) * h).collect()
        };
        (
            centres(self.theta_range, self.theta_cells),
            centres(self.p_range, self.p_cells),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub theta: f64,
    pub p: f64,
    pub energy: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSet {
    pub level: f64,
    pub separatrix: bool,
    pub lines: Vec<Polyline>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub nodes: usize,
    /// Number of separatrix energies below the region's energies.
    pub band: usize,
    pub centroid: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct PhasePortrait {
    pub spec: PortraitSpec,
    pub energy: Grid2,
    pub action_rate: Grid2,
    pub contours: Vec<ContourSet>,
    pub stationary: Vec<StationaryPoint>,
    pub separatrix_levels: Vec<f64>,
    pub regions: Vec<Region>,
    /// Whether `(ϑ, p) → (−ϑ, −p)` maps regions onto regions; `None` for
    /// ranges that are not symmetric about the origin.
    pub mirror_paired: Option<bool>,
}

fn in_range(spec: &PortraitSpec, theta: f64, p: f64) -> bool {
    let (a, b) = spec.theta_range;
    let (c, d) = spec.p_range;
    theta > a - 1e-12 && theta <= b + 1e-12 && p >= c && p <= d
}

/// Zeros of `∇H` inside the spec's window, by Newton iteration from a coarse
/// seed lattice.
pub fn stationary_points(h: &PolarHamiltonian, spec: &PortraitSpec) -> Result<Vec<StationaryPoint>> {
    spec.validate()?;
    let seeds_theta = 48;
    let seeds_p = 24;
    let (a, b) = spec.theta_range;
    let (c, d) = spec.p_range;
    let seeds: Vec<(f64, f64)> = (0..seeds_theta)
        .flat_map(|i| {
            (0..seeds_p).map(move |j| {
                (
                    a + (i as f64 + 0.5) * (b - a) / seeds_theta as f64,
                    c + (j as f64 + 0.5) * (d - c) / seeds_p as f64,
                )
            })
        })
        .collect();
    let found: Vec<StationaryPoint> = seeds
        .par_iter()
        .filter_map(|&(t0, p0)| newton_stationary(h, t0, p0))
        .map(|(t, p)| {
            let t = if spec.periodic() { wrap_angle(t) } else { t };
            let (gt, gp) = h.partials(t, p);
            StationaryPoint {
                theta: t,
                p,
                energy: h.value(t, p),
                gradient_norm: gt.hypot(gp),
            }
        })
        .filter(|s| in_range(spec, s.theta, s.p) && s.gradient_norm < 1e-10)
        .collect();
    let mut unique: Vec<StationaryPoint> = Vec::new();
    for s in found {
        let same = |u: &StationaryPoint| {
            let dt = if spec.periodic() { crate::bloch::angle_difference(u.theta, s.theta) } else { u.theta - s.theta };
            dt.abs() < 1e-7 && (u.p - s.p).abs() < 1e-7
        };
        if !unique.iter().any(same) {
            unique.push(s);
        }
    }
    unique.sort_by(|u, v| u.theta.total_cmp(&v.theta).then(u.p.total_cmp(&v.p)));
    Ok(unique)
}

fn newton_stationary(h: &PolarHamiltonian, mut t: f64, mut p: f64) -> Option<(f64, f64)> {
    for _ in 0..100 {
        let (gt, gp) = h.partials(t, p);
        if gt.hypot(gp) < 1e-14 {
            return Some((t, p));
        }
        let [[a, b], [_, d]] = h.hessian(t, p);
        let det = a * d - b * b;
        if det.abs() < 1e-300 || !det.is_finite() {
            return None;
        }
        let dt = (d * gt - b * gp) / det;
        let dp = (a * gp - b * gt) / det;
        // limit wild steps so seeds stay local
        let scale = (dt.hypot(dp) / 0.5).max(1.0);
        t -= dt / scale;
        p -= dp / scale;
        if !t.is_finite() || !p.is_finite() || p.abs() > 1e3 {
            return None;
        }
    }
    let (gt, gp) = h.partials(t, p);
    (gt.hypot(gp) < 1e-12).then_some((t, p))
}

fn separatrix_levels(points: &[StationaryPoint]) -> Vec<f64> {
    let mut levels: Vec<f64> = Vec::new();
    for s in points {
        if !levels.iter().any(|l| (l - s.energy).abs() < 1e-9) {
            levels.push(s.energy);
        }
    }
    levels.sort_by(f64::total_cmp);
    levels
}

/// Labels the grid nodes left after blanking every node adjacent to a level
/// crossing and a disk around each stationary point.
fn label_regions(
    spec: &PortraitSpec,
    energy: &Grid2,
    levels: &[f64],
    stationary: &[StationaryPoint],
) -> (Vec<Option<usize>>, Vec<Region>) {
    let (nt, np) = energy.shape();
    let idx = |i: usize, j: usize| i * np + j;
    let periodic = spec.periodic();
    let mut blocked = vec![false; nt * np];

    let mut neighbours = Vec::with_capacity(2 * nt * np);
    for i in 0..nt {
        for j in 0..np {
            if i + 1 < nt {
                neighbours.push((idx(i, j), idx(i + 1, j)));
            } else if periodic {
                neighbours.push((idx(i, j), idx(0, j)));
            }
            if j + 1 < np {
                neighbours.push((idx(i, j), idx(i, j + 1)));
            }
        }
    }
    for &level in levels {
        let above: Vec<bool> = energy.values.iter().map(|&v| v >= level).collect();
        for &(u, v) in &neighbours {
            if above[u] != above[v] {
                blocked[u] = true;
                blocked[v] = true;
            }
        }
    }
    let ht = (spec.theta_range.1 - spec.theta_range.0) / nt as f64;
    let hp = (spec.p_range.1 - spec.p_range.0) / np as f64;
    let r2 = spec.saddle_radius * spec.saddle_radius;
    for s in stationary {
        for i in 0..nt {
            let mut dt = energy.xs[i] - s.theta;
            if periodic {
                dt = crate::bloch::angle_difference(energy.xs[i], s.theta);
            }
            for j in 0..np {
                let dp = energy.ys[j] - s.p;
                if (dt / ht).powi(2) + (dp / hp).powi(2) <= r2 {
                    blocked[idx(i, j)] = true;
                }
            }
        }
    }

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nt * np];
    for &(u, v) in &neighbours {
        if !blocked[u] && !blocked[v] {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
    }
    let mut label = vec![None; nt * np];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..nt * np {
        if blocked[start] || label[start].is_some() {
            continue;
        }
        let id = components.len();
        let mut members = vec![start];
        label[start] = Some(id);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if label[v].is_none() {
                    label[v] = Some(id);
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        components.push(members);
    }

    let min_nodes = (MIN_REGION_FRACTION * (nt * np) as f64).ceil() as usize;
    let mut remap = vec![None; components.len()];
    let mut regions = Vec::new();
    for (id, members) in components.iter().enumerate() {
        if members.len() < min_nodes {
            continue;
        }
        remap[id] = Some(regions.len());
        let e = energy.values[members[0]];
        let band = levels.iter().filter(|&&l| l <= e).count();
        let (st, sp) = members.iter().fold((0.0, 0.0), |(a, b), &m| {
            (a + energy.xs[m / np], b + energy.ys[m % np])
        });
        let n = members.len() as f64;
        regions.push(Region {
            nodes: members.len(),
            band,
            centroid: (st / n, sp / n),
        });
    }
    let label = label.into_iter().map(|l| l.and_then(|id| remap[id])).collect();
    (label, regions)
}

fn mirror_consistent(label: &[Option<usize>], regions: usize, nt: usize, np: usize) -> bool {
    let mut image: Vec<Option<usize>> = vec![None; regions];
    for i in 0..nt {
        for j in 0..np {
            let (Some(a), Some(b)) = (label[i * np + j], label[(nt - 1 - i) * np + (np - 1 - j)]) else {
                continue;
            };
            match image[a] {
                None => image[a] = Some(b),
                Some(prev) if prev != b => return false,
                _ => {}
            }
        }
    }
    image
        .iter()
        .enumerate()
        .all(|(a, &b)| b.is_some_and(|b| image[b] == Some(a)))
}

pub fn phase_portrait(h: &PolarHamiltonian, spec: &PortraitSpec) -> Result<PhasePortrait> {
    spec.validate()?;
    let (thetas, ps) = spec.axes();
    let energy = Grid2::from_fn(thetas.clone(), ps.clone(), |t, p| h.value(t, p));
    let action_rate = Grid2::from_fn(thetas, ps, |t, p| h.action_rate_at(t, p));
    let stationary = stationary_points(h, spec)?;
    let separatrix = separatrix_levels(&stationary);

    let mut contours: Vec<ContourSet> = spec
        .levels
        .iter()
        .map(|&l| l * h.gamma)
        .filter(|l| !separatrix.iter().any(|s| (s - l).abs() < 1e-12))
        .map(|level| ContourSet {
            level,
            separatrix: false,
            lines: Vec::new(),
        })
        .collect();
    contours.extend(separatrix.iter().map(|&level| ContourSet {
        level,
        separatrix: true,
        lines: Vec::new(),
    }));
    contours.sort_by(|a, b| a.level.total_cmp(&b.level));
    contours
        .par_iter_mut()
        .for_each(|c| c.lines = contour(&energy, c.level));

    let (label, regions) = label_regions(spec, &energy, &separatrix, &stationary);
    let mirror_paired = spec
        .symmetric()
        .then(|| mirror_consistent(&label, regions.len(), spec.theta_cells, spec.p_cells));
    Ok(PhasePortrait {
        spec: spec.clone(),
        energy,
        action_rate,
        contours,
        stationary,
        separatrix_levels: separatrix,
        regions,
        mirror_paired,
    })
}
