//! Darcy posterior: synthetic data, observation operator and the potential.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, BatchLabel, Phase};
use crate::targets::TargetPotential;

use super::kl::{kl_eigenpairs, KlBasis};
use super::solver::{solve_darcy, Grid2D, PressureField};

pub const SIGMA_ETA: f64 = 0.25;
pub const SIGMA_0: f64 = 5.0;
pub const REFINEMENT: usize = 3;

/// Observation location `(num1/den1, num2/den2)`, kept as exact fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsPoint {
    pub num1: u32,
    pub den1: u32,
    pub num2: u32,
    pub den2: u32,
}

impl ObsPoint {
    pub fn x(&self) -> (f64, f64) {
        (
            self.num1 as f64 / self.den1 as f64,
            self.num2 as f64 / self.den2 as f64,
        )
    }

    pub fn mirror(&self) -> Self {
        ObsPoint {
            num1: self.den1 - self.num1,
            ..*self
        }
    }
}

/// The 8 × 15 lattice `x₁ = i/20`, `x₂ = j/16` left of `x₁ = ½`.
pub fn default_obs_points() -> Vec<ObsPoint> {
    let mut out = Vec::with_capacity(120);
    for j in 1..=15 {
        for i in 1..=8 {
            out.push(ObsPoint {
                num1: i,
                den1: 20,
                num2: j,
                den2: 16,
            });
        }
    }
    out
}

/// Bilinear interpolation of nodal values; exact node values when the point is a node.
pub fn interpolate(p: &PressureField, pt: ObsPoint) -> f64 {
    let n = p.n as u64;
    let split = |num: u32, den: u32| {
        let scaled = num as u64 * n;
        let cell = (scaled / den as u64) as usize;
        let rem = scaled % den as u64;
        (cell, rem as f64 / den as f64, rem == 0)
    };
    let (i, t1, on1) = split(pt.num1, pt.den1);
    let (j, t2, on2) = split(pt.num2, pt.den2);
    let along = |jj: usize| {
        if on1 {
            p.at(i, jj)
        } else {
            (1.0 - t1) * p.at(i, jj) + t1 * p.at(i + 1, jj)
        }
    };
    if on2 {
        along(j)
    } else {
        (1.0 - t2) * along(j) + t2 * along(j + 1)
    }
}

/// `½ (p(x) + p(1 − x₁, x₂))` per observation point.
pub fn observe(p: &PressureField, points: &[ObsPoint]) -> Vec<f64> {
    points
        .iter()
        .map(|&pt| 0.5 * (interpolate(p, pt) + interpolate(p, pt.mirror())))
        .collect()
}

/// Parameters that fix a synthetic Darcy problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DarcySetup {
    pub seed: u64,
    pub n: usize,
    pub n_theta: usize,
}

#[derive(Debug, Clone)]
pub struct DarcyPosterior {
    pub setup: DarcySetup,
    pub basis: KlBasis,
    pub grid: Grid2D,
    pub source: Vec<f64>,
    pub obs_points: Vec<ObsPoint>,
    pub y_obs: Vec<f64>,
    pub theta_ref: Vec<f64>,
    pub sigma_eta: f64,
    pub sigma0: f64,
}

/// Result of [`synthesize_observations`], with the noise-free data kept for diagnostics.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub posterior: DarcyPosterior,
    pub y_clean: Vec<f64>,
}

/// Forward map `G(θ)` on an arbitrary grid.
pub fn forward_on(
    basis: &KlBasis,
    theta: &[f64],
    grid: Grid2D,
    points: &[ObsPoint],
) -> Result<Vec<f64>> {
    let log_a = basis.log_permeability_half_grid(theta, grid.n);
    let p = solve_darcy(&log_a, &grid.darcy_source(), grid)?;
    Ok(observe(&p, points))
}

/// Draws `θ_ref` from the prior, solves on a grid refined by three and adds observation noise.
pub fn synthesize_observations(setup: DarcySetup) -> Result<Synthesis> {
    let grid = Grid2D::new(setup.n)?;
    if setup.n_theta == 0 {
        return Err(Error::InvalidConfig("n_theta must be positive".into()));
    }
    let basis = kl_eigenpairs(setup.n_theta);
    let mut rng = stream_rng(setup.seed, setup_label(1));
    let theta_ref: Vec<f64> = (0..setup.n_theta)
        .map(|_| SIGMA_0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let fine = Grid2D::new(REFINEMENT * setup.n)?;
    let obs_points = default_obs_points();
    let y_clean = forward_on(&basis, &theta_ref, fine, &obs_points)?;
    let mut noise = stream_rng(setup.seed, setup_label(2));
    let y_obs = y_clean
        .iter()
        .map(|y| y + SIGMA_ETA * noise.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(Synthesis {
        posterior: DarcyPosterior {
            setup,
            source: grid.darcy_source(),
            basis,
            grid,
            obs_points,
            y_obs,
            theta_ref,
            sigma_eta: SIGMA_ETA,
            sigma0: SIGMA_0,
        },
        y_clean,
    })
}

fn setup_label(iteration: u64) -> BatchLabel {
    BatchLabel {
        phase: Phase::Setup,
        iteration,
        component: 0,
    }
}

impl DarcyPosterior {
    /// `G(θ)` on the inversion grid.
    pub fn forward(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.basis.len() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.len(),
                found: theta.len(),
            });
        }
        let log_a = self.basis.log_permeability_half_grid(theta, self.grid.n);
        let p = solve_darcy(&log_a, &self.source, self.grid)?;
        Ok(observe(&p, &self.obs_points))
    }

    pub fn potential_from_forward(&self, theta: &[f64], g: &[f64]) -> f64 {
        let mut misfit = 0.0;
        for (y, gv) in self.y_obs.iter().zip(g) {
            misfit += (y - gv) * (y - gv);
        }
        let prior: f64 = theta.iter().map(|t| t * t).sum();
        misfit / (2.0 * self.sigma_eta * self.sigma_eta) + prior / (2.0 * self.sigma0 * self.sigma0)
    }

    pub fn mirror_coeffs(&self, theta: &[f64]) -> Vec<f64> {
        self.basis.mirror_coeffs(theta)
    }

    /// Log-permeability at the `(n+1)²` grid nodes.
    pub fn log_permeability_nodes(&self, theta: &[f64]) -> Vec<f64> {
        self.basis
            .log_permeability_half_grid(theta, self.grid.n)
            .nodes()
    }

    /// Replaces the data; used to build zero-misfit problems in tests.
    pub fn with_observations(&self, y_obs: Vec<f64>) -> Self {
        DarcyPosterior {
            y_obs,
            ..self.clone()
        }
    }

    pub fn to_document(&self) -> DarcyDocument {
        DarcyDocument {
            seed: self.setup.seed,
            n: self.setup.n,
            n_theta: self.setup.n_theta,
            sigma0: self.sigma0,
            sigma_eta: self.sigma_eta,
            obs_points: self.obs_points.clone(),
            theta_ref: self.theta_ref.clone(),
            y_obs: self.y_obs.clone(),
        }
    }

    pub fn from_document(doc: &DarcyDocument) -> Result<Self> {
        let grid = Grid2D::new(doc.n)?;
        if doc.theta_ref.len() != doc.n_theta {
            return Err(Error::DimensionMismatch {
                expected: doc.n_theta,
                found: doc.theta_ref.len(),
            });
        }
        if doc.y_obs.len() != doc.obs_points.len() {
            return Err(Error::DimensionMismatch {
                expected: doc.obs_points.len(),
                found: doc.y_obs.len(),
            });
        }
        if !(doc.sigma0 > 0.0 && doc.sigma_eta > 0.0) {
            return Err(Error::InvalidConfig(
                "noise and prior scales must be positive".into(),
            ));
        }
        for p in &doc.obs_points {
            if p.den1 == 0 || p.den2 == 0 || 2 * p.num1 >= p.den1 || p.num2 > p.den2 {
                return Err(Error::InvalidConfig(format!(
                    "observation point {p:?} is not in the left region"
                )));
            }
        }
        Ok(DarcyPosterior {
            setup: DarcySetup {
                seed: doc.seed,
                n: doc.n,
                n_theta: doc.n_theta,
            },
            basis: kl_eigenpairs(doc.n_theta),
            source: grid.darcy_source(),
            grid,
            obs_points: doc.obs_points.clone(),
            y_obs: doc.y_obs.clone(),
            theta_ref: doc.theta_ref.clone(),
            sigma_eta: doc.sigma_eta,
            sigma0: doc.sigma0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(&self.to_document()).expect("darcy document serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: DarcyDocument = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
        Self::from_document(&doc)
    }
}

/// Plain-text form of a Darcy problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarcyDocument {
    pub seed: u64,
    pub n: usize,
    pub n_theta: usize,
    pub sigma0: f64,
    pub sigma_eta: f64,
    pub obs_points: Vec<ObsPoint>,
    pub theta_ref: Vec<f64>,
    pub y_obs: Vec<f64>,
}

impl TargetPotential for DarcyPosterior {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn evaluate(&self, theta: &[f64]) -> f64 {
        self.try_evaluate(theta).unwrap_or(f64::NAN)
    }

    fn try_evaluate(&self, theta: &[f64]) -> Result<f64> {
        let g = self.forward(theta)?;
        Ok(self.potential_from_forward(theta, &g))
    }
}
