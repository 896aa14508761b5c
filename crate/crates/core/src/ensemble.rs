//! Monte Carlo trajectories from the positive Kraus map, ensemble statistics,
//! post-selection, histograms and the ellipse law of inefficient homodyne
//! detection.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{bloch_to_density, BlochVector, DensityMatrix, Mat2};
use crate::distance::DistanceMeasure;
use crate::error::{config, Error, Result};
use crate::measure::{
    apply_unitary, apply_update, drive_unitary, kraus_for, readout_signal, sample_from, Branch,
    Readout, Scheme, SchemeConfig,
};
use crate::rng::{trajectory_rng, trajectory_seed};

/// Trajectories per block when accumulating statistics; fixes summation order.
const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Store every k-th state (the final state is always stored).
    pub decimation: usize,
    /// Keep the readout record. Requires `decimation == 1`.
    pub keep_readouts: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            decimation: 1,
            keep_readouts: true,
        }
    }
}

impl SimOptions {
    pub fn states_only(decimation: usize) -> Self {
        Self {
            decimation,
            keep_readouts: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.decimation == 0 {
            return config("decimation must be at least 1");
        }
        if self.keep_readouts && self.decimation != 1 {
            return config("readouts can only be kept without decimation");
        }
        Ok(())
    }
}

/// Stored path of one run. `readouts[k]` takes `states[k]` to `states[k + 1]`;
/// it is empty when the record was discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlochVector>,
    pub readouts: Vec<Readout>,
    pub scheme: Option<Scheme>,
    pub index: u64,
    pub seed: u64,
}

impl Trajectory {
    pub(crate) fn deterministic(times: Vec<f64>, states: Vec<BlochVector>) -> Self {
        Self {
            times,
            states,
            readouts: Vec::new(),
            scheme: None,
            index: 0,
            seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> BlochVector {
        *self.states.last().expect("trajectory has no states")
    }

    /// Index of the stored time closest to `t`, if `t` lies within the span.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        let slack = 1e-9 * last.abs().max(1.0);
        if t < first - slack || t > last + slack {
            return None;
        }
        let k = self.times.partition_point(|&s| s < t);
        match k {
            0 => Some(0),
            k if k >= self.times.len() => Some(self.times.len() - 1),
            k => Some(if t - self.times[k - 1] <= self.times[k] - t { k - 1 } else { k }),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.times.len() != self.states.len() {
            return Err(Error::Shape(format!(
                "{} times but {} states",
                self.times.len(),
                self.states.len()
            )));
        }
        if !self.readouts.is_empty() && self.readouts.len() + 1 != self.states.len() {
            return Err(Error::Shape(format!(
                "{} readouts for {} states",
                self.readouts.len(),
                self.states.len()
            )));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Shape("times are not increasing".into()));
        }
        for s in &self.states {
            s.checked()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub master_seed: u64,
    pub config: SchemeConfig,
    pub initial: BlochVector,
    pub t_final: f64,
    pub options: SimOptions,
    pub trajectories: Vec<Trajectory>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn final_states(&self) -> Vec<BlochVector> {
        self.trajectories.iter().map(Trajectory::final_state).collect()
    }
}

pub(crate) fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return config(format!("final time {t_final} must be finite and non-negative"));
    }
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(1.0) {
        return config(format!("final time {t_final} is not a multiple of dt = {dt}"));
    }
    Ok(n as usize)
}

/// One step of the Kraus map: drive, draw a readout, update.
struct Stepper {
    cfg: SchemeConfig,
    unitary: Option<Mat2>,
}

impl Stepper {
    fn new(cfg: &SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        if !cfg.is_weak() {
            log::warn!(
                "gamma*dt = {} exceeds the weak-measurement regime ({})",
                cfg.epsilon(),
                crate::measure::WEAK_EPSILON
            );
        }
        Ok(Self {
            cfg: *cfg,
            unitary: cfg.is_driven().then(|| drive_unitary(cfg)),
        })
    }

    #[inline]
    fn step<D>(&self, rho: &DensityMatrix, draw: D) -> Result<(DensityMatrix, Readout)>
    where
        D: FnOnce(&BlochVector) -> Readout,
    {
        let driven = match &self.unitary {
            Some(u) => apply_unitary(rho, u),
            None => *rho,
        };
        let ro = draw(&driven.coords());
        let ks = kraus_for(&self.cfg, &ro)?;
        Ok((apply_update(&driven, &ks, Branch::for_readout(&ro))?, ro))
    }
}

fn run<D>(
    stepper: &Stepper,
    q0: BlochVector,
    steps: usize,
    opts: SimOptions,
    mut draw: D,
) -> Result<Trajectory>
where
    D: FnMut(&BlochVector, usize) -> Readout,
{
    let dt = stepper.cfg.dt;
    let stored = steps / opts.decimation + 2;
    let mut times = Vec::with_capacity(stored);
    let mut states = Vec::with_capacity(stored);
    let mut readouts = Vec::with_capacity(if opts.keep_readouts { steps } else { 0 });
    times.push(0.0);
    states.push(q0);
    let mut rho = bloch_to_density(q0)?;
    for k in 0..steps {
        let (next, ro) = stepper
            .step(&rho, |q| draw(q, k))
            .map_err(|e| Error::Integration {
                step: k + 1,
                reason: e.to_string(),
            })?;
        rho = next;
        if opts.keep_readouts {
            readouts.push(ro);
        }
        if (k + 1) % opts.decimation == 0 || k + 1 == steps {
            let q = rho.coords().checked().map_err(|e| Error::Integration {
                step: k + 1,
                reason: e.to_string(),
            })?;
            times.push((k + 1) as f64 * dt);
            states.push(q);
        }
    }
    Ok(Trajectory {
        times,
        states,
        readouts,
        scheme: Some(stepper.cfg.scheme),
        index: 0,
        seed: 0,
    })
}

fn run_indexed(
    stepper: &Stepper,
    q0: BlochVector,
    steps: usize,
    opts: SimOptions,
    master_seed: u64,
    index: u64,
) -> Result<Trajectory> {
    let mut rng = trajectory_rng(master_seed, index);
    let cfg = stepper.cfg;
    let mut traj = run(stepper, q0, steps, opts, |q, _| sample_from(q, &cfg, &mut rng))?;
    traj.index = index;
    traj.seed = trajectory_seed(master_seed, index);
    Ok(traj)
}

/// Final state only, without storing the path.
fn run_final(
    stepper: &Stepper,
    q0: BlochVector,
    steps: usize,
    master_seed: u64,
    index: u64,
) -> Result<BlochVector> {
    let mut rng = trajectory_rng(master_seed, index);
    let cfg = stepper.cfg;
    let mut rho = bloch_to_density(q0)?;
    for k in 0..steps {
        rho = stepper
            .step(&rho, |q| sample_from(q, &cfg, &mut rng))
            .map_err(|e| Error::Integration {
                step: k + 1,
                reason: e.to_string(),
            })?
            .0;
    }
    rho.coords().checked()
}

/// Trajectory `index` of the ensemble keyed by `master_seed`.
pub fn simulate_trajectory(
    cfg: &SchemeConfig,
    q0: BlochVector,
    t_final: f64,
    master_seed: u64,
    index: u64,
    opts: SimOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    let q0 = q0.checked()?;
    let stepper = Stepper::new(cfg)?;
    run_indexed(&stepper, q0, step_count(t_final, cfg.dt)?, opts, master_seed, index)
}

/// Kraus-map trajectory driven by supplied standard normals (`[n_I, n_Q]` per
/// step; homodyne uses the first). The readout is `signal + n/√dt`, which shares
/// its noise with [`crate::dynamics::integrate_sme_with`].
pub fn simulate_with_normals<F>(
    cfg: &SchemeConfig,
    q0: BlochVector,
    t_final: f64,
    mut normals: F,
) -> Result<Trajectory>
where
    F: FnMut(usize) -> [f64; 2],
{
    if cfg.scheme == Scheme::Photodetect {
        return config("photodetection records are not Gaussian");
    }
    let stepper = Stepper::new(cfg)?;
    let sd = cfg.dt.sqrt().recip();
    let cfg = *cfg;
    run(&stepper, q0.checked()?, step_count(t_final, cfg.dt)?, SimOptions::default(), |q, k| {
        let n = normals(k);
        match readout_signal(q, &cfg) {
            Readout::Dyne { r } => Readout::Dyne { r: r + sd * n[0] },
            Readout::DualDyne { r_i, r_q } => Readout::DualDyne {
                r_i: r_i + sd * n[0],
                r_q: r_q + sd * n[1],
            },
            jump => jump,
        }
    })
}

pub fn simulate_ensemble(
    cfg: &SchemeConfig,
    q0: BlochVector,
    t_final: f64,
    n: usize,
    master_seed: u64,
    opts: SimOptions,
) -> Result<Ensemble> {
    if n == 0 {
        return config("ensemble size must be at least 1");
    }
    opts.validate()?;
    let q0 = q0.checked()?;
    let stepper = Stepper::new(cfg)?;
    let steps = step_count(t_final, cfg.dt)?;
    let trajectories = (0..n as u64)
        .into_par_iter()
        .map(|i| run_indexed(&stepper, q0, steps, opts, master_seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        master_seed,
        config: *cfg,
        initial: q0,
        t_final,
        options: opts,
        trajectories,
    })
}

/// Indices in `range` whose final state passes `keep`; no paths are stored.
pub fn select_indices<K>(
    cfg: &SchemeConfig,
    q0: BlochVector,
    t_final: f64,
    range: std::ops::Range<u64>,
    master_seed: u64,
    keep: K,
) -> Result<Vec<u64>>
where
    K: Fn(&BlochVector) -> bool + Sync,
{
    let q0 = q0.checked()?;
    let stepper = Stepper::new(cfg)?;
    let steps = step_count(t_final, cfg.dt)?;
    let chosen = range
        .into_par_iter()
        .map(|i| run_final(&stepper, q0, steps, master_seed, i).map(|q| keep(&q).then_some(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(chosen.into_iter().flatten().collect())
}

/// Regenerates the listed trajectories of the ensemble keyed by `master_seed`.
pub fn simulate_indices(
    cfg: &SchemeConfig,
    q0: BlochVector,
    t_final: f64,
    indices: &[u64],
    master_seed: u64,
    opts: SimOptions,
) -> Result<Ensemble> {
    opts.validate()?;
    let q0 = q0.checked()?;
    let stepper = Stepper::new(cfg)?;
    let steps = step_count(t_final, cfg.dt)?;
    let trajectories = indices
        .par_iter()
        .map(|&i| run_indexed(&stepper, q0, steps, opts, master_seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        master_seed,
        config: *cfg,
        initial: q0,
        t_final,
        options: opts,
        trajectories,
    })
}

/// Runs `n` trajectories but stores only those whose final state passes
/// `keep`. Paths are regenerated from their streams after selection, so the
/// result is identical to filtering a full [`simulate_ensemble`] run.
pub fn simulate_selected<K>(
    cfg: &SchemeConfig,
    q0: BlochVector,
    t_final: f64,
    n: usize,
    master_seed: u64,
    opts: SimOptions,
    keep: K,
) -> Result<Ensemble>
where
    K: Fn(&BlochVector) -> bool + Sync,
{
    opts.validate()?;
    let chosen = select_indices(cfg, q0, t_final, 0..n as u64, master_seed, keep)?;
    simulate_indices(cfg, q0, t_final, &chosen, master_seed, opts)
}

/// Batch schedule for rare-event selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthPlan {
    pub batch: usize,
    pub max_total: usize,
    /// Stop once this many trajectories pass the selection.
    pub wanted: usize,
}

/// Draws trajectories `0, 1, 2, …` in batches until `plan.wanted` pass `keep`
/// or `plan.max_total` have been drawn, then regenerates the selected paths.
/// Whole batches are always run, so the outcome depends only on the plan.
pub fn simulate_selected_until<K>(
    cfg: &SchemeConfig,
    q0: BlochVector,
    t_final: f64,
    master_seed: u64,
    opts: SimOptions,
    keep: K,
    plan: GrowthPlan,
) -> Result<Selection>
where
    K: Fn(&BlochVector) -> bool + Sync,
{
    if plan.batch == 0 {
        return config("batch size must be at least 1");
    }
    opts.validate()?;
    let mut chosen = Vec::new();
    let mut drawn = 0;
    while chosen.len() < plan.wanted && drawn < plan.max_total {
        let end = (drawn + plan.batch).min(plan.max_total);
        chosen.extend(select_indices(cfg, q0, t_final, drawn as u64..end as u64, master_seed, &keep)?);
        log::debug!("{} of {end} trajectories selected", chosen.len());
        drawn = end;
    }
    Ok(Selection {
        ensemble: simulate_indices(cfg, q0, t_final, &chosen, master_seed, opts)?,
        drawn_from: drawn,
    })
}

/// Pointwise mean and standard error of the Bloch components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMean {
    pub times: Vec<f64>,
    pub mean: Vec<BlochVector>,
    pub stderr: Vec<BlochVector>,
    pub count: usize,
}

#[derive(Clone)]
struct Moments {
    sum: Vec<Vector3<f64>>,
    sq: Vec<Vector3<f64>>,
    count: usize,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![Vector3::zeros(); len],
            sq: vec![Vector3::zeros(); len],
            count: 0,
        }
    }

    fn add(&mut self, states: &[BlochVector]) {
        for ((s, q), v) in self.sum.iter_mut().zip(self.sq.iter_mut()).zip(states) {
            let v = v.to_vector();
            *s += v;
            *q += v.component_mul(&v);
        }
        self.count += 1;
    }

    fn merge(mut self, other: &Moments) -> Self {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sq.iter_mut().zip(&other.sq) {
            *a += b;
        }
        self.count += other.count;
        self
    }

    fn finish(self, times: Vec<f64>) -> EnsembleMean {
        let n = self.count as f64;
        let (mut mean, mut stderr) = (Vec::new(), Vec::new());
        for (s, q) in self.sum.iter().zip(&self.sq) {
            let m = s / n;
            let var = if self.count > 1 {
                (q / n - m.component_mul(&m)).map(|v| v.max(0.0)) * (n / (n - 1.0))
            } else {
                Vector3::zeros()
            };
            mean.push(BlochVector::from_vector(&m));
            stderr.push(BlochVector::from_vector(&var.map(|v| (v / n).sqrt())));
        }
        EnsembleMean {
            times,
            mean,
            stderr,
            count: self.count,
        }
    }
}

pub fn ensemble_mean(e: &Ensemble) -> Result<EnsembleMean> {
    let first = e.trajectories.first().ok_or(Error::EmptySelection)?;
    let len = first.len();
    if e.trajectories.iter().any(|t| t.len() != len) {
        return Err(Error::Shape("trajectories have different lengths".into()));
    }
    let mut m = Moments::new(len);
    for t in &e.trajectories {
        m.add(&t.states);
    }
    Ok(m.finish(first.times.clone()))
}

/// Mean and standard error of `n` trajectories without storing them.
pub fn simulate_mean(
    cfg: &SchemeConfig,
    q0: BlochVector,
    t_final: f64,
    n: usize,
    master_seed: u64,
    decimation: usize,
) -> Result<EnsembleMean> {
    if n == 0 {
        return config("ensemble size must be at least 1");
    }
    let opts = SimOptions::states_only(decimation);
    opts.validate()?;
    let q0 = q0.checked()?;
    let stepper = Stepper::new(cfg)?;
    let steps = step_count(t_final, cfg.dt)?;
    let blocks: Vec<(Moments, Vec<f64>)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut m: Option<Moments> = None;
            let mut times = Vec::new();
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let t = run_indexed(&stepper, q0, steps, opts, master_seed, i as u64)?;
                let acc = m.get_or_insert_with(|| Moments::new(t.len()));
                acc.add(&t.states);
                if times.is_empty() {
                    times = t.times;
                }
            }
            Ok((m.expect("non-empty block"), times))
        })
        .collect::<Result<_>>()?;
    let times = blocks[0].1.clone();
    let total = blocks
        .iter()
        .skip(1)
        .fold(blocks[0].0.clone(), |acc, (m, _)| acc.merge(m));
    Ok(total.finish(times))
}

/// Final boundary condition for post-selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Distance to a state under the chosen measure.
    State(BlochVector),
    /// Signed polar angle on the y = 0 circle, compared without wrapping.
    Angle(f64),
}

impl Target {
    pub fn accepts(&self, q: &BlochVector, window: f64, measure: &dyn DistanceMeasure) -> bool {
        match *self {
            Target::State(t) => measure.distance(q, &t) <= window,
            Target::Angle(theta) => (q.polar().angle() - theta).abs() <= window,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub ensemble: Ensemble,
    /// Size of the ensemble the selection was drawn from.
    pub drawn_from: usize,
}

impl Selection {
    pub fn is_empty(&self) -> bool {
        self.ensemble.is_empty()
    }

    pub fn fraction(&self) -> f64 {
        self.ensemble.len() as f64 / self.drawn_from.max(1) as f64
    }
}

pub fn post_select(
    e: &Ensemble,
    target: Target,
    window: f64,
    measure: &dyn DistanceMeasure,
) -> Result<Selection> {
    if !(window > 0.0) {
        return config(format!("post-selection window must be positive (got {window})"));
    }
    let trajectories = e
        .trajectories
        .iter()
        .filter(|t| target.accepts(&t.final_state(), window, measure))
        .cloned()
        .collect();
    Ok(Selection {
        ensemble: Ensemble {
            trajectories,
            ..e.clone_header()
        },
        drawn_from: e.len(),
    })
}

impl Ensemble {
    pub(crate) fn clone_header(&self) -> Ensemble {
        Ensemble {
            master_seed: self.master_seed,
            config: self.config,
            initial: self.initial,
            t_final: self.t_final,
            options: self.options,
            trajectories: Vec::new(),
        }
    }
}

/// Normalized occupation of a regular grid over `[−1, 1]²` in `(x, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub time: f64,
    pub bins: usize,
    pub edges: Vec<f64>,
    /// Row-major over `(z, x)`: `density[iz * bins + ix]`. Sums to 1.
    pub density: Vec<f64>,
}

impl Histogram2D {
    pub fn bin_width(&self) -> f64 {
        2.0 / self.bins as f64
    }

    pub fn bin_of(&self, v: f64) -> usize {
        (((v + 1.0) / self.bin_width()).floor().max(0.0) as usize).min(self.bins - 1)
    }

    pub fn at(&self, ix: usize, iz: usize) -> f64 {
        self.density[iz * self.bins + ix]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// Occupied bins as `(ix, iz, density)`.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.density
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0.0)
            .map(|(k, &d)| (k % self.bins, k / self.bins, d))
    }
}

pub fn density_histogram(e: &Ensemble, t: f64, bins: usize) -> Result<Histogram2D> {
    if bins == 0 {
        return config("histogram needs at least one bin");
    }
    let first = e.trajectories.first().ok_or(Error::EmptySelection)?;
    let k = first
        .time_index(t)
        .ok_or_else(|| Error::Config(format!("time {t} outside the simulated span")))?;
    let mut h = Histogram2D {
        time: first.times[k],
        bins,
        edges: (0..=bins).map(|i| -1.0 + 2.0 * i as f64 / bins as f64).collect(),
        density: vec![0.0; bins * bins],
    };
    for traj in &e.trajectories {
        let q = traj.states[k];
        let (ix, iz) = (h.bin_of(q.x), h.bin_of(q.z));
        h.density[iz * bins + ix] += 1.0;
    }
    let n = e.len() as f64;
    h.density.iter_mut().for_each(|d| *d /= n);
    Ok(h)
}

/// Reachable set of inefficient homodyne detection at θ = 0 from a state with
/// `y = 0`: the ellipse `u(t)·x² + (u(t)(1+z) − 1)² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseLaw {
    pub eta: f64,
    pub u0: f64,
    pub gamma: f64,
}

impl EllipseLaw {
    pub fn new(eta: f64, u0: f64, gamma: f64) -> Self {
        Self { eta, u0, gamma }
    }

    pub fn from_initial(q0: &BlochVector, eta: f64, gamma: f64) -> Result<Self> {
        if q0.z <= -1.0 {
            return Err(Error::Domain("the ground state has no ellipse parameter".into()));
        }
        Ok(Self::new(eta, ellipse_invariant(q0), gamma))
    }

    pub fn u(&self, t: f64) -> f64 {
        self.eta + (self.u0 - self.eta) * (self.gamma * t).exp()
    }

    /// Upper and lower branch `z±(x, t)`.
    pub fn branches(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        let u = self.u(t);
        let disc = 1.0 - u * x * x;
        if disc < 0.0 || !disc.is_finite() {
            return Err(Error::Domain(format!(
                "x = {x} lies outside the ellipse at t = {t} (u = {u})"
            )));
        }
        let root = disc.sqrt();
        Ok(((1.0 + root) / u - 1.0, (1.0 - root) / u - 1.0))
    }
}

/// `2/(1+z) − x²/(1+z)²`, the quantity whose time dependence is `u(t)`.
pub fn ellipse_invariant(q: &BlochVector) -> f64 {
    let w = 1.0 + q.z;
    2.0 / w - q.x * q.x / (w * w)
}

/// Vertical distance from `q` to the nearer ellipse branch at time `t`.
pub fn ellipse_residual(q: &BlochVector, t: f64, law: &EllipseLaw) -> Result<f64> {
    let (up, down) = law.branches(q.x, t)?;
    Ok((q.z - up).abs().min((q.z - down).abs()))
}
