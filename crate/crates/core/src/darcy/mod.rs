//! Elliptic inverse problem: recover a KL-parameterized log-permeability from
//! symmetric pressure observations.

pub mod kl;
pub mod posterior;
pub mod solver;

pub use kl::{kl_eigenpairs, HalfGridField, KlBasis};
pub use posterior::{
    default_obs_points, forward_on, observe, synthesize_observations, DarcyDocument,
    DarcyPosterior, DarcySetup, ObsPoint, Synthesis, SIGMA_0, SIGMA_ETA,
};
pub use solver::{solve_darcy, Grid2D, PressureField};
