//! Run manifests and the named presets.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::darcy::{synthesize_observations, DarcyPosterior, DarcySetup};
use crate::error::{Error, Result};
use crate::integrator::{AnnealConfig, IntegratorConfig, SchedulerConfig, SchedulerKind};
use crate::metrics::GridSpec;
use crate::mixture::{matrix_from_rows, MixtureState};
use crate::rng::{stream_rng, BatchLabel, Phase};
use crate::spd::{SpdMatrix, SqrtFactor};
use crate::targets::{CaseA, CaseB, CaseC, Funnel, GaussianTarget, TargetPotential};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    CaseA {
        d: usize,
        #[serde(default)]
        layout_seed: u64,
    },
    CaseB {
        d: usize,
    },
    CaseC {
        d: usize,
    },
    Funnel {
        d: usize,
    },
    Gaussian {
        mean: Vec<f64>,
        /// Covariance, one row per entry.
        covariance: Vec<Vec<f64>>,
    },
    Darcy {
        n: usize,
        n_theta: usize,
        seed: u64,
    },
}

/// A constructed target, keeping the concrete Darcy posterior for its metrics.
#[derive(Clone)]
pub enum BuiltTarget {
    Analytic(Arc<dyn TargetPotential>),
    Darcy(Arc<DarcyPosterior>),
}

impl BuiltTarget {
    pub fn potential(&self) -> &dyn TargetPotential {
        match self {
            BuiltTarget::Analytic(t) => t.as_ref(),
            BuiltTarget::Darcy(p) => p.as_ref(),
        }
    }

    pub fn darcy(&self) -> Option<&DarcyPosterior> {
        match self {
            BuiltTarget::Darcy(p) => Some(p),
            BuiltTarget::Analytic(_) => None,
        }
    }
}

impl TargetSpec {
    pub fn dim(&self) -> usize {
        match *self {
            TargetSpec::CaseA { d, .. }
            | TargetSpec::CaseB { d }
            | TargetSpec::CaseC { d }
            | TargetSpec::Funnel { d } => d,
            TargetSpec::Gaussian { ref mean, .. } => mean.len(),
            TargetSpec::Darcy { n_theta, .. } => n_theta,
        }
    }

    pub fn build(&self) -> Result<BuiltTarget> {
        let t: Arc<dyn TargetPotential> = match self {
            TargetSpec::CaseA { d, layout_seed } => Arc::new(CaseA::new(*d, *layout_seed)?),
            TargetSpec::CaseB { d } => Arc::new(CaseB::new(*d)?),
            TargetSpec::CaseC { d } => Arc::new(CaseC::new(*d)?),
            TargetSpec::Funnel { d } => Arc::new(Funnel::new(*d)?),
            TargetSpec::Gaussian { mean, covariance } => {
                let c = matrix_from_rows(covariance, mean.len())?;
                Arc::new(GaussianTarget::new(
                    DVector::from_vec(mean.clone()),
                    &SpdMatrix::new(&c)?,
                )?)
            }
            TargetSpec::Darcy { n, n_theta, seed } => {
                let s = synthesize_observations(DarcySetup {
                    seed: *seed,
                    n: *n,
                    n_theta: *n_theta,
                })?;
                return Ok(BuiltTarget::Darcy(Arc::new(s.posterior)));
            }
        };
        Ok(BuiltTarget::Analytic(t))
    }

    /// TV grid for targets with a closed-form `(θ₁, θ₂)` marginal.
    pub fn default_grid(&self) -> Option<GridSpec> {
        match self {
            TargetSpec::CaseA { .. } => Some(GridSpec::case_a()),
            TargetSpec::CaseB { .. } => Some(GridSpec::case_b()),
            TargetSpec::CaseC { .. } => Some(GridSpec::case_c()),
            TargetSpec::Funnel { .. } => Some(GridSpec::funnel()),
            TargetSpec::Gaussian { mean, .. } if mean.len() >= 2 => Some(GridSpec::case_a()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `K` components with `m_k ~ N(offset·1, mean_scale² I)`, `C_k = cov_scale · I`, equal weights.
    SeededStandard {
        #[serde(rename = "K")]
        k: usize,
        mean_scale: f64,
        cov_scale: f64,
        #[serde(default)]
        mean_offset: f64,
    },
    /// A mixture file, relative paths resolved against the manifest's directory.
    Explicit { path: PathBuf },
}

impl InitialSpec {
    pub fn build(&self, d: usize, seed: u64, base: &Path) -> Result<MixtureState> {
        match self {
            InitialSpec::SeededStandard {
                k,
                mean_scale,
                cov_scale,
                mean_offset,
            } => {
                if *k == 0
                    || !(*mean_scale >= 0.0)
                    || !(*cov_scale > 0.0)
                    || !mean_offset.is_finite()
                {
                    return Err(Error::InvalidConfig(format!(
                        "bad seeded initial state {self:?}"
                    )));
                }
                let means = (0..*k)
                    .map(|c| {
                        let mut rng = stream_rng(
                            seed,
                            BatchLabel {
                                phase: Phase::Setup,
                                iteration: 3,
                                component: c as u64,
                            },
                        );
                        DVector::from_fn(d, |_, _| {
                            mean_offset + mean_scale * rng.sample::<f64, _>(StandardNormal)
                        })
                    })
                    .collect();
                let l = SqrtFactor::scaled_identity(d, *cov_scale)?;
                MixtureState::with_unnormalized_weights(means, vec![l; *k], &vec![0.0; *k])
            }
            InitialSpec::Explicit { path } => {
                let state = MixtureState::load(&base.join(path))?;
                if state.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: state.dim(),
                    });
                }
                Ok(state)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSchedule {
    /// Evaluate metrics at iteration 0, every `every` iterations and at the end.
    pub every: usize,
    #[serde(default = "yes")]
    pub tv: bool,
    #[serde(default = "yes")]
    pub stats: bool,
    #[serde(default = "yes")]
    pub darcy: bool,
    /// Overrides the target's default TV grid.
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

fn yes() -> bool {
    true
}

impl Default for MetricSchedule {
    fn default() -> Self {
        MetricSchedule {
            every: 10,
            tv: true,
            stats: true,
            darcy: true,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub name: String,
    /// Output directory; relative paths are resolved against the output root.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub config: IntegratorConfig,
    pub target: TargetSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub metrics: MetricSchedule,
}

impl RunManifest {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Reads and validates a manifest. Unreadable files are configuration errors.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read manifest {}: {e}", path.display()))
        })?;
        let m = Self::from_toml(&text).map_err(|e| Error::parse(path, e))?;
        m.validate(path.parent().unwrap_or(Path::new(".")))?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self, base: &Path) -> Result<()> {
        self.config.validate()?;
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(format!(
                "invalid run name {:?}",
                self.name
            )));
        }
        if self.metrics.every == 0 {
            return Err(Error::InvalidConfig(
                "metrics.every must be positive".into(),
            ));
        }
        if let Some(g) = &self.metrics.grid {
            g.validate()?;
        }
        if let InitialSpec::Explicit { path } = &self.initial {
            let p = base.join(path);
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!(
                    "initial state {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Option<GridSpec> {
        self.metrics.grid.or_else(|| self.target.default_grid())
    }
}

fn base_config(d: usize, n_iter: usize) -> IntegratorConfig {
    IntegratorConfig::new(4 * d, n_iter, 0)
}

fn annealed(mut c: IntegratorConfig, alpha: f64) -> IntegratorConfig {
    c.anneal = AnnealConfig {
        enabled: true,
        n_alpha: 500,
        alpha,
        j_anneal: 0,
    };
    c
}

fn standard_init(k: usize) -> InitialSpec {
    InitialSpec::SeededStandard {
        k,
        mean_scale: 1.0,
        cov_scale: 1.0,
        mean_offset: 0.0,
    }
}

fn manifest(
    name: String,
    config: IntegratorConfig,
    target: TargetSpec,
    initial: InitialSpec,
) -> RunManifest {
    RunManifest {
        name,
        output_dir: None,
        config,
        target,
        initial,
        metrics: MetricSchedule::default(),
    }
}

fn case_manifest(case: char, d: usize) -> RunManifest {
    let target = match case {
        'a' => TargetSpec::CaseA { d, layout_seed: 0 },
        'b' => TargetSpec::CaseB { d },
        _ => TargetSpec::CaseC { d },
    };
    let mut config = base_config(d, 500);
    if case != 'b' {
        config = annealed(config, 0.1);
    }
    manifest(
        format!("case_{case}_{d}d"),
        config,
        target,
        standard_init(40),
    )
}

fn darcy_manifest(name: &str, n: usize, n_theta: usize, n_iter: usize) -> RunManifest {
    let mut m = manifest(
        name.to_string(),
        base_config(n_theta, n_iter),
        TargetSpec::Darcy {
            n,
            n_theta,
            seed: 0,
        },
        InitialSpec::SeededStandard {
            k: 5,
            mean_scale: crate::darcy::SIGMA_0,
            cov_scale: crate::darcy::SIGMA_0 * crate::darcy::SIGMA_0,
            mean_offset: 0.0,
        },
    );
    m.metrics.every = 10;
    m
}

fn sensitivity_presets() -> Vec<RunManifest> {
    let base = case_manifest('a', 10);
    let mut out = Vec::new();
    for (tag, offset) in [("p2", 2.0), ("m2", -2.0)] {
        let mut m = base.clone();
        m.name = format!("case_a_10d_shift_{tag}");
        m.initial = InitialSpec::SeededStandard {
            k: 40,
            mean_scale: 1.0,
            cov_scale: 1.0,
            mean_offset: offset,
        };
        out.push(m);
    }
    for k in [10, 20, 40] {
        let mut m = base.clone();
        m.name = format!("case_a_10d_K{k}");
        m.initial = standard_init(k);
        out.push(m);
    }
    for (tag, kind) in [
        ("stable_cosine", SchedulerKind::StableCosine),
        ("stable_linear", SchedulerKind::StableLinear),
        ("exponential", SchedulerKind::Exponential),
    ] {
        let mut m = base.clone();
        m.name = format!("case_a_10d_sched_{tag}");
        m.config.scheduler = SchedulerConfig { kind, eta_min: 0.1 };
        out.push(m);
    }
    for (tag, alpha) in [("none", None), ("a05", Some(0.5)), ("a01", Some(0.1))] {
        let mut m = base.clone();
        m.name = format!("case_a_10d_anneal_{tag}");
        m.config = match alpha {
            Some(a) => annealed(base_config(10, 500), a),
            None => base_config(10, 500),
        };
        out.push(m);
    }
    out
}

/// Every named preset, in listing order.
pub fn presets() -> Vec<RunManifest> {
    let mut out = Vec::new();
    for case in ['a', 'b', 'c'] {
        for d in [2, 10, 50] {
            out.push(case_manifest(case, d));
        }
    }
    for d in [2, 10, 50] {
        out.push(manifest(
            format!("funnel_{d}d"),
            base_config(d, 2000),
            TargetSpec::Funnel { d },
            standard_init(40),
        ));
    }
    out.push(darcy_manifest("darcy_k5", 80, 32, 500));
    out.push(darcy_manifest("darcy_k5_small", 40, 16, 200));
    out.extend(sensitivity_presets());
    out
}

pub fn preset(name: &str) -> Option<RunManifest> {
    presets().into_iter().find(|m| m.name == name)
}

/// Target spec for `N(mean, covariance)`.
pub fn gaussian_spec(mean: &DVector<f64>, covariance: &DMatrix<f64>) -> TargetSpec {
    TargetSpec::Gaussian {
        mean: mean.iter().copied().collect(),
        covariance: crate::mixture::matrix_rows(covariance),
    }
}
