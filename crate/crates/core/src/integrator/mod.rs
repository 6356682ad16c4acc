//! Adaptive exponential integrator for the Gaussian-mixture natural-gradient flow.
//!
//! One step draws `J` standard-normal samples per component, estimates the
//! centered moments of `f_k(θ) = log ρ(L_k θ + m_k) + Φ(L_k θ + m_k)`, picks
//! `Δt = min(Δt_max η, β / max_k ‖E_k‖₂)`, and then updates every component
//! from the same pre-step state:
//!
//! ```text
//! C_k ← L_k exp(−E_k Δt) L_kᵀ
//! m_k ← m_k − Δt L_k ĝ_k
//! log w_k ← log w_k − Δt (f̄_k − Σ_i w_i f̄_i)
//! ```

mod anneal;
mod config;
mod moments;
mod run;
mod schedule;
mod step;

pub use anneal::{anneal_init, anneal_temperature, start_temperature, AnnealReport};
pub use config::{AnnealConfig, IntegratorConfig, SchedulerConfig, SchedulerKind};
pub use moments::{estimate_moments, exact_moments_gaussian, ComponentMoments, MomentEstimates};
pub use run::{advance, draw_main_batches, run, run_with_observer, StepDiagnostics, Trajectory};
pub use schedule::scheduler_eta;
pub use step::{adaptive_dt, step_covariance, step_mean_weights};
