//! Hamilton's equations integrated with RK4.

use crate::bloch::BlochVector;
use crate::error::{config, Error, Result};

use super::hamiltonian::{Coords, PhasePoint, StochasticHamiltonian};

/// Momenta beyond this magnitude count as a divergence.
pub const MOMENTUM_LIMIT: f64 = 1e6;

/// Sampled optimal path. `action[k]` is `∫₀^{t_k} Ṡ dt` by the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct OpSolution<const N: usize> {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint<N>>,
    pub readouts: Vec<f64>,
    pub energies: Vec<f64>,
    pub action_rates: Vec<f64>,
    pub action: Vec<f64>,
}

impl<const N: usize> OpSolution<N> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial(&self) -> &PhasePoint<N> {
        &self.points[0]
    }

    pub fn terminal(&self) -> &PhasePoint<N> {
        self.points.last().expect("solutions hold at least the initial point")
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    /// Total action `S`.
    pub fn total_action(&self) -> f64 {
        *self.action.last().expect("non-empty")
    }

    /// `max_k |E_k − E_0| / max(1, |E_0|)`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        let scale = e0.abs().max(1.0);
        self.energies
            .iter()
            .map(|e| (e - e0).abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn states<H: StochasticHamiltonian<N>>(&self, h: &H) -> Vec<BlochVector> {
        self.points.iter().map(|pt| h.state(&pt.q)).collect()
    }
}

fn derivative<const N: usize, H: StochasticHamiltonian<N>>(
    h: &H,
    pt: &PhasePoint<N>,
) -> (Coords<N>, Coords<N>) {
    let (dq, dp) = h.gradient(pt);
    (dp, -dq)
}

fn rk4_step<const N: usize, H: StochasticHamiltonian<N>>(
    h: &H,
    pt: &PhasePoint<N>,
    dt: f64,
) -> PhasePoint<N> {
    let shift = |k: &(Coords<N>, Coords<N>), s: f64| PhasePoint {
        q: pt.q + k.0 * s,
        p: pt.p + k.1 * s,
    };
    let k1 = derivative(h, pt);
    let k2 = derivative(h, &shift(&k1, 0.5 * dt));
    let k3 = derivative(h, &shift(&k2, 0.5 * dt));
    let k4 = derivative(h, &shift(&k3, dt));
    PhasePoint {
        q: pt.q + (k1.0 + (k2.0 + k3.0) * 2.0 + k4.0) * (dt / 6.0),
        p: pt.p + (k1.1 + (k2.1 + k3.1) * 2.0 + k4.1) * (dt / 6.0),
    }
}

fn steps_for(t_final: f64, dt: f64) -> Result<usize> {
    if !(t_final >= 0.0 && t_final.is_finite()) || !(dt > 0.0 && dt.is_finite()) {
        return config(format!("need T >= 0 and dt > 0 (T = {t_final}, dt = {dt})"));
    }
    Ok((t_final / dt - 1e-9).ceil().max(0.0) as usize)
}

/// Endpoint of the flow without recording the path.
pub fn flow_endpoint<const N: usize, H: StochasticHamiltonian<N>>(
    h: &H,
    start: PhasePoint<N>,
    t_final: f64,
    dt: f64,
) -> Result<PhasePoint<N>> {
    let n = steps_for(t_final, dt)?;
    let mut pt = start;
    for k in 0..n {
        let t = k as f64 * dt;
        let step = dt.min(t_final - t);
        pt = rk4_step(h, &pt, step);
        check(&pt, t + step)?;
    }
    Ok(pt)
}

/// States of the flow at each of `times` (ascending), without recording the path.
pub fn flow_samples<const N: usize, H: StochasticHamiltonian<N>>(
    h: &H,
    start: PhasePoint<N>,
    times: &[f64],
    dt: f64,
) -> Result<Vec<PhasePoint<N>>> {
    let mut out = Vec::with_capacity(times.len());
    let mut pt = start;
    let mut t = 0.0;
    for &target in times {
        if target < t {
            return config("sample times must be ascending and non-negative");
        }
        pt = flow_endpoint(h, pt, target - t, dt).map_err(|e| match e {
            Error::BlowUp { time } => Error::BlowUp { time: time + t },
            other => other,
        })?;
        t = target;
        out.push(pt);
    }
    Ok(out)
}

fn check<const N: usize>(pt: &PhasePoint<N>, time: f64) -> Result<()> {
    if !pt.is_finite() || pt.p.amax() > MOMENTUM_LIMIT {
        return Err(Error::BlowUp { time });
    }
    Ok(())
}

/// Integrates `q̇ = ∂H/∂p`, `ṗ = −∂H/∂q` from `start` over `[0, t_final]`.
pub fn hamilton_flow<const N: usize, H: StochasticHamiltonian<N>>(
    h: &H,
    start: PhasePoint<N>,
    t_final: f64,
    dt: f64,
) -> Result<OpSolution<N>> {
    if !start.is_finite() {
        return config("initial phase point must be finite");
    }
    let n = steps_for(t_final, dt)?;
    let mut sol = OpSolution {
        times: Vec::with_capacity(n + 1),
        points: Vec::with_capacity(n + 1),
        readouts: Vec::with_capacity(n + 1),
        energies: Vec::with_capacity(n + 1),
        action_rates: Vec::with_capacity(n + 1),
        action: Vec::with_capacity(n + 1),
    };
    let record = |sol: &mut OpSolution<N>, t: f64, pt: PhasePoint<N>| {
        let rate = h.action_rate(&pt);
        let acc = match (sol.times.last(), sol.action_rates.last(), sol.action.last()) {
            (Some(&t0), Some(&r0), Some(&s0)) => s0 + 0.5 * (t - t0) * (r0 + rate),
            _ => 0.0,
        };
        sol.times.push(t);
        sol.points.push(pt);
        sol.readouts.push(h.optimal_readout(&pt));
        sol.energies.push(h.energy(&pt));
        sol.action_rates.push(rate);
        sol.action.push(acc);
    };
    record(&mut sol, 0.0, start);
    let mut pt = start;
    for k in 0..n {
        let t = k as f64 * dt;
        let (step, t_next) = if k + 1 == n { (t_final - t, t_final) } else { (dt, (k + 1) as f64 * dt) };
        pt = rk4_step(h, &pt, step);
        check(&pt, t_next)?;
        record(&mut sol, t_next, pt);
    }
    Ok(sol)
}
