//! Most-likely-path estimate from a post-selected ensemble: rank trajectories
//! by their summed distance to all others and average the closest cluster.

use log::warn;
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::BlochVector;
use crate::distance::DistanceMeasure;
use crate::ensemble::{Ensemble, Trajectory};
use crate::error::{config, Error, Result};
use crate::rng::auxiliary_rng;

pub const DEFAULT_FRACTION: f64 = 0.075;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpSettings {
    /// Share of the ranked trajectories that are averaged.
    pub fraction: f64,
    /// Warn when fewer trajectories than this enter the average.
    pub min_group: usize,
    /// Larger subsets are subsampled to this size before ranking.
    pub max_subset: usize,
}

impl Default for MlpSettings {
    fn default() -> Self {
        Self {
            fraction: DEFAULT_FRACTION,
            min_group: 100,
            max_subset: 20_000,
        }
    }
}

fn require_symmetric(measure: &dyn DistanceMeasure) -> Result<()> {
    if !measure.is_symmetric() {
        return config(format!("distance {} is not symmetric", measure.name()));
    }
    Ok(())
}

/// `Σ_k D(a(t_k), b(t_k))` over a shared time grid.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory, measure: &dyn DistanceMeasure) -> Result<f64> {
    require_symmetric(measure)?;
    if a.times != b.times {
        return Err(Error::Shape(format!(
            "trajectories {} and {} are sampled on different grids",
            a.index, b.index
        )));
    }
    Ok(pair_distance(a, b, measure))
}

fn pair_distance(a: &Trajectory, b: &Trajectory, measure: &dyn DistanceMeasure) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(p, q)| measure.distance(p, q))
        .sum()
}

/// Symmetric pairwise distances with row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub n: usize,
    /// Row-major `n × n`.
    pub values: Vec<f64>,
    pub row_sums: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

pub fn build_distance_matrix(e: &Ensemble, measure: &dyn DistanceMeasure) -> Result<DistanceMatrix> {
    require_symmetric(measure)?;
    let n = e.len();
    if n < 2 {
        return config(format!("a distance matrix needs at least two trajectories, got {n}"));
    }
    let grid = &e.trajectories[0].times;
    if let Some(t) = e.trajectories.iter().find(|t| &t.times != grid) {
        return Err(Error::Shape(format!("trajectory {} has a different time grid", t.index)));
    }
    // upper triangle, one pair evaluated once
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| pair_distance(&e.trajectories[i], &e.trajectories[j], measure))
                .collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (k, &d) in row.iter().enumerate() {
            let j = i + 1 + k;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    let row_sums = values.chunks(n).map(|r| r.iter().sum()).collect();
    Ok(DistanceMatrix { n, values, row_sums })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedMlp {
    /// Pointwise mean of the selected trajectories.
    pub path: Trajectory,
    /// Trajectory indices in the average, closest first.
    pub selected: Vec<u64>,
    pub ranked_from: usize,
    /// Original subset size when it was subsampled.
    pub subsampled_from: Option<usize>,
    pub fraction: f64,
    pub measure: &'static str,
}

/// Averages the `⌈f·n⌉` trajectories with the smallest row sums; ties go to
/// the lower trajectory index.
pub fn extract_mlp(subset: &Ensemble, settings: &MlpSettings, measure: &dyn DistanceMeasure) -> Result<ExtractedMlp> {
    require_symmetric(measure)?;
    if !(settings.fraction > 0.0 && settings.fraction <= 1.0) {
        return config(format!("fraction must lie in (0, 1], got {}", settings.fraction));
    }
    if subset.is_empty() {
        return Err(Error::EmptySelection);
    }
    if settings.max_subset < 2 {
        return config("max_subset must be at least 2");
    }

    let mut pool: Vec<&Trajectory> = subset.trajectories.iter().collect();
    let subsampled_from = (pool.len() > settings.max_subset).then_some(pool.len());
    if subsampled_from.is_some() {
        let mut rng = auxiliary_rng(subset.master_seed, "mlp-subsample");
        let mut keep = sample(&mut rng, pool.len(), settings.max_subset).into_vec();
        keep.sort_unstable();
        pool = keep.into_iter().map(|i| pool[i]).collect();
    }
    let n = pool.len();
    let take = ((settings.fraction * n as f64).ceil() as usize).clamp(1, n);

    let order: Vec<usize> = if n == 1 {
        vec![0]
    } else {
        let view = Ensemble {
            trajectories: pool.iter().map(|t| (*t).clone()).collect(),
            ..subset.clone_header()
        };
        let dm = build_distance_matrix(&view, measure)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            dm.row_sums[a]
                .total_cmp(&dm.row_sums[b])
                .then(pool[a].index.cmp(&pool[b].index))
        });
        order
    };
    let chosen: Vec<&Trajectory> = order[..take].iter().map(|&i| pool[i]).collect();
    if take < settings.min_group {
        warn!(
            "averaging only {take} trajectories (recommended at least {})",
            settings.min_group
        );
    }

    let len = chosen[0].len();
    let mut sums = vec![nalgebra::Vector3::<f64>::zeros(); len];
    for t in &chosen {
        for (s, q) in sums.iter_mut().zip(&t.states) {
            *s += q.to_vector();
        }
    }
    let states = sums
        .iter()
        .map(|s| BlochVector::from_vector(&(s / take as f64)))
        .collect();
    Ok(ExtractedMlp {
        path: Trajectory::deterministic(chosen[0].times.clone(), states),
        selected: chosen.iter().map(|t| t.index).collect(),
        ranked_from: n,
        subsampled_from,
        fraction: settings.fraction,
        measure: measure.name(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::TraceDistance;
    use crate::ensemble::{simulate_ensemble, SimOptions};
    use crate::measure::{Scheme, SchemeConfig};

    struct Lopsided;
    impl DistanceMeasure for Lopsided {
        fn name(&self) -> &'static str {
            "lopsided"
        }
        fn distance(&self, a: &BlochVector, b: &BlochVector) -> f64 {
            (a.z - b.z).max(0.0)
        }
        fn is_symmetric(&self) -> bool {
            false
        }
    }

    fn constant(index: u64, q: BlochVector, m: usize) -> Trajectory {
        let mut t = Trajectory::deterministic((0..m).map(|k| k as f64).collect(), vec![q; m]);
        t.index = index;
        t
    }

    fn small_ensemble(n: usize) -> Ensemble {
        let cfg = SchemeConfig::new(Scheme::Homodyne, 1.0, 1e-2);
        simulate_ensemble(&cfg, BlochVector::EXCITED, 0.5, n, 3, SimOptions::states_only(1)).unwrap()
    }

    #[test]
    fn constant_paths_at_the_poles() {
        let a = constant(0, BlochVector::EXCITED, 7);
        let b = constant(1, BlochVector::GROUND, 7);
        assert_eq!(trajectory_distance(&a, &b, &TraceDistance).unwrap(), 7.0);
        assert_eq!(trajectory_distance(&a, &a, &TraceDistance).unwrap(), 0.0);
    }

    #[test]
    fn asymmetric_measures_and_grid_mismatch_are_rejected() {
        let a = constant(0, BlochVector::EXCITED, 3);
        let b = constant(1, BlochVector::GROUND, 4);
        assert!(matches!(trajectory_distance(&a, &b, &TraceDistance), Err(Error::Shape(_))));
        assert!(matches!(trajectory_distance(&a, &a, &Lopsided), Err(Error::Config(_))));
    }

    #[test]
    fn matrix_is_symmetric_with_brute_force_row_sums() {
        let e = small_ensemble(12);
        let dm = build_distance_matrix(&e, &TraceDistance).unwrap();
        for i in 0..dm.n {
            assert_eq!(dm.get(i, i), 0.0);
            let mut row = 0.0;
            for j in 0..dm.n {
                assert_eq!(dm.get(i, j), dm.get(j, i));
                assert!(dm.get(i, j) >= 0.0);
                row += trajectory_distance(&e.trajectories[i], &e.trajectories[j], &TraceDistance).unwrap();
            }
            assert!((row - dm.row_sums[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn full_fraction_is_the_plain_mean() {
        let e = small_ensemble(9);
        let settings = MlpSettings {
            fraction: 1.0,
            ..MlpSettings::default()
        };
        let mlp = extract_mlp(&e, &settings, &TraceDistance).unwrap();
        let mean = crate::ensemble::ensemble_mean(&e).unwrap();
        assert_eq!(mlp.selected.len(), 9);
        for (a, b) in mlp.path.states.iter().zip(&mean.mean) {
            assert!(a.distance(b) < 1e-14);
        }
    }

    #[test]
    fn ranking_follows_relabelling() {
        let e = small_ensemble(10);
        let settings = MlpSettings {
            fraction: 0.3,
            ..MlpSettings::default()
        };
        let a = extract_mlp(&e, &settings, &TraceDistance).unwrap();
        let mut rev = e.clone();
        rev.trajectories.reverse();
        let b = extract_mlp(&rev, &settings, &TraceDistance).unwrap();
        assert_eq!(a.selected, b.selected);
        assert_eq!(a.selected.len(), 3);
    }

    #[test]
    fn subsampling_caps_the_matrix() {
        let e = small_ensemble(30);
        let settings = MlpSettings {
            fraction: 0.5,
            min_group: 1,
            max_subset: 10,
        };
        let mlp = extract_mlp(&e, &settings, &TraceDistance).unwrap();
        assert_eq!(mlp.subsampled_from, Some(30));
        assert_eq!(mlp.ranked_from, 10);
        assert_eq!(mlp.selected.len(), 5);
        assert_eq!(mlp, extract_mlp(&e, &settings, &TraceDistance).unwrap());
    }

    #[test]
    fn empty_subset_signals() {
        let mut e = small_ensemble(2);
        e.trajectories.clear();
        assert!(matches!(
            extract_mlp(&e, &MlpSettings::default(), &TraceDistance),
            Err(Error::EmptySelection)
        ));
    }
}
