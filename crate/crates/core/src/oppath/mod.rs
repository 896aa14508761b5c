//! Optimal paths: Hamilton flows of the stochastic Hamiltonian with the
//! readout at its most likely value.

pub mod flow;
pub mod hamiltonian;
pub mod manifold;
pub mod portrait;
pub mod shooting;

pub use flow::{flow_endpoint, flow_samples, hamilton_flow, OpSolution};
pub use hamiltonian::{
    composed_hamiltonian, PhasePoint, PlanarHamiltonian, PlanarPoint, PolarHamiltonian, PolarPoint,
    StochasticHamiltonian,
};
pub use manifold::{momentum_grid, propagate_lm, LagrangianManifold};
pub use portrait::{phase_portrait, stationary_points, PhasePortrait, PortraitSpec};
pub use shooting::{mismatch_profile, shoot, shoot_planar, MismatchProfile, ShootingRoot, ShootingSettings};
