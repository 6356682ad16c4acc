//! Gaussian-mixture variational inference driven by a derivative-free natural-gradient flow.
//!
//! Each mixture component carries a mean, a lower-triangular square root of
//! its covariance and a log-weight. The [`integrator`] advances all of them
//! with Monte Carlo estimates that only evaluate the target potential.

pub mod analysis;
pub mod darcy;
pub mod error;
pub mod experiment;
pub mod integrator;
pub mod manifest;
pub mod metrics;
pub mod mixture;
pub mod rng;
pub mod spd;
pub mod targets;

pub use error::{Error, ErrorClass, Result};
pub use integrator::{run, IntegratorConfig, Trajectory};
pub use manifest::{preset, presets, RunManifest};
pub use mixture::MixtureState;
pub use spd::{SpdMatrix, SqrtFactor, SymMatrix};
pub use targets::TargetPotential;
