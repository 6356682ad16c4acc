use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    StableCosine,
    StableLinear,
    Exponential,
    Constant,
    OneOverN,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    pub eta_min: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            kind: SchedulerKind::StableCosine,
            eta_min: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub enabled: bool,
    #[serde(rename = "N_alpha")]
    pub n_alpha: usize,
    pub alpha: f64,
    /// Samples per component during annealing; 0 means "same as `J`".
    #[serde(rename = "J_anneal", default)]
    pub j_anneal: usize,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            enabled: false,
            n_alpha: 500,
            alpha: 0.1,
            j_anneal: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt_max: f64,
    pub beta: f64,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "N_iter")]
    pub n_iter: usize,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub anneal: AnnealConfig,
    pub seed: u64,
    /// Save a state snapshot every this many iterations; 0 disables snapshots.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub exact_expectations: bool,
}

impl IntegratorConfig {
    pub fn new(j: usize, n_iter: usize, seed: u64) -> Self {
        IntegratorConfig {
            dt_max: 0.9,
            beta: 0.9,
            j,
            n_iter,
            scheduler: SchedulerConfig::default(),
            anneal: AnnealConfig::default(),
            seed,
            snapshot_every: 0,
            exact_expectations: false,
        }
    }

    pub fn anneal_samples(&self) -> usize {
        if self.anneal.j_anneal == 0 {
            self.j
        } else {
            self.anneal.j_anneal
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.dt_max > 0.0 && self.dt_max <= 1.0) {
            return bad("dt_max must lie in (0, 1]");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if self.j < 2 && !self.exact_expectations {
            return bad("J must be at least 2");
        }
        let eta_min = self.scheduler.eta_min;
        if !(eta_min > 0.0 && eta_min <= 1.0) {
            return bad("eta_min must lie in (0, 1]");
        }
        if self.anneal.enabled {
            if !(self.anneal.alpha > 0.0 && self.anneal.alpha < 1.0) {
                return bad("anneal alpha must lie in (0, 1)");
            }
            if self.anneal.n_alpha < 2 {
                return bad("anneal N_alpha must be at least 2");
            }
            if self.anneal_samples() < 2 {
                return bad("J_anneal must be at least 2");
            }
        }
        Ok(())
    }
}
