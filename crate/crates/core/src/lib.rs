//! Simulation of a qubit whose fluorescence is monitored by photodetection,
//! heterodyne or homodyne detection.
//!
//! States evolve under positive Kraus maps (`measure`, `ensemble`), with the
//! equivalent stochastic master equation in `dynamics`. `oppath` computes most
//! likely paths from a stochastic Hamiltonian, `mlp` extracts the same paths
//! from post-selected ensembles, and `retro` covers backward-in-time dynamics.

pub mod bloch;
pub mod contour;
pub mod distance;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod measure;
pub mod mlp;
pub mod oppath;
pub mod quadrature;
pub mod retro;
pub mod rng;

pub use bloch::{BlochVector, DensityMatrix, PolarCoordinate};
pub use error::{Error, Result};
pub use measure::{Readout, Scheme, SchemeConfig};
