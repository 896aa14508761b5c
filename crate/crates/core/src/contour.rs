//! Marching-squares level sets on a rectilinear grid.

use std::collections::HashMap;

/// Values sampled at `(xs[i], ys[j])`, stored row-major as `values[i * ys.len() + j]`.
#[derive(Debug, Clone)]
pub struct Grid2 {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl Grid2 {
    pub fn from_fn<F: Fn(f64, f64) -> f64>(xs: Vec<f64>, ys: Vec<f64>, f: F) -> Self {
        let mut values = Vec::with_capacity(xs.len() * ys.len());
        for &x in &xs {
            for &y in &ys {
                values.push(f(x, y));
            }
        }
        Self { xs, ys, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ys.len() + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.xs.len(), self.ys.len())
    }
}

pub type Polyline = Vec<(f64, f64)>;

/// Grid edge holding a crossing: the lower-left node and the direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    AlongX(usize, usize),
    AlongY(usize, usize),
}

fn crossing(grid: &Grid2, edge: Edge, level: f64) -> (f64, f64) {
    let (a, b, pa, pb) = match edge {
        Edge::AlongX(i, j) => (
            grid.at(i, j),
            grid.at(i + 1, j),
            (grid.xs[i], grid.ys[j]),
            (grid.xs[i + 1], grid.ys[j]),
        ),
        Edge::AlongY(i, j) => (
            grid.at(i, j),
            grid.at(i, j + 1),
            (grid.xs[i], grid.ys[j]),
            (grid.xs[i], grid.ys[j + 1]),
        ),
    };
    let s = if a == b { 0.5 } else { ((level - a) / (b - a)).clamp(0.0, 1.0) };
    (pa.0 + s * (pb.0 - pa.0), pa.1 + s * (pb.1 - pa.1))
}

/// Segments of one cell; a node counts as "above" when `value >= level`.
fn cell_segments(grid: &Grid2, i: usize, j: usize, level: f64) -> Vec<(Edge, Edge)> {
    let v00 = grid.at(i, j);
    let v10 = grid.at(i + 1, j);
    let v11 = grid.at(i + 1, j + 1);
    let v01 = grid.at(i, j + 1);
    if ![v00, v10, v11, v01].iter().all(|v| v.is_finite()) {
        return Vec::new();
    }
    let bit = |v: f64| usize::from(v >= level);
    let case = bit(v00) | bit(v10) << 1 | bit(v11) << 2 | bit(v01) << 3;
    let bottom = Edge::AlongX(i, j);
    let right = Edge::AlongY(i + 1, j);
    let top = Edge::AlongX(i, j + 1);
    let left = Edge::AlongY(i, j);
    match case {
        0 | 15 => vec![],
        1 | 14 => vec![(left, bottom)],
        2 | 13 => vec![(bottom, right)],
        3 | 12 => vec![(left, right)],
        4 | 11 => vec![(right, top)],
        6 | 9 => vec![(bottom, top)],
        7 | 8 => vec![(left, top)],
        5 | 10 => {
            let center_above = 0.25 * (v00 + v10 + v11 + v01) >= level;
            // case 5: corners 00 and 11 above
            if (case == 5) == center_above {
                vec![(left, top), (bottom, right)]
            } else {
                vec![(left, bottom), (right, top)]
            }
        }
        _ => unreachable!(),
    }
}

/// Level set of `grid` at `level`, joined into polylines. Closed curves repeat
/// their first point at the end.
pub fn contour(grid: &Grid2, level: f64) -> Vec<Polyline> {
    let (nx, ny) = grid.shape();
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            segments.extend(cell_segments(grid, i, j, level));
        }
    }
    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(k);
        by_edge.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let next_from = |edge: Edge, used: &[bool]| -> Option<usize> {
        by_edge.get(&edge)?.iter().copied().find(|&k| !used[k])
    };

    let mut lines = Vec::new();
    // open curves first, starting at edges touched by a single segment
    let mut starts: Vec<usize> = (0..segments.len())
        .filter(|&k| {
            let (a, b) = segments[k];
            by_edge[&a].len() == 1 || by_edge[&b].len() == 1
        })
        .collect();
    starts.extend(0..segments.len());
    for start in starts {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let (first, mut tail) = if by_edge[&a].len() == 1 { (a, b) } else if by_edge[&b].len() == 1 { (b, a) } else { (a, b) };
        let mut edges = vec![first, tail];
        while let Some(k) = next_from(tail, &used) {
            used[k] = true;
            let (a, b) = segments[k];
            tail = if a == tail { b } else { a };
            edges.push(tail);
        }
        lines.push(edges.into_iter().map(|e| crossing(grid, e, level)).collect());
    }
    lines
}
