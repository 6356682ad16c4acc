use std::f64::consts::PI;

use super::config::SchedulerKind;

/// Step-size factor `η(t_n)` for iteration `n` of `total` (1-based).
pub fn scheduler_eta(kind: SchedulerKind, n: usize, total: usize, eta_min: f64) -> f64 {
    let total = total.max(1);
    let r = n as f64 / total as f64;
    match kind {
        SchedulerKind::Constant => 1.0,
        SchedulerKind::StableCosine => {
            if 2 * n <= total {
                1.0
            } else {
                eta_min + 0.5 * (1.0 - eta_min) * (1.0 + (2.0 * PI * (r - 0.5)).cos())
            }
        }
        SchedulerKind::StableLinear => {
            if 2 * n <= total {
                1.0
            } else {
                1.0 - (1.0 - eta_min) * (2.0 * r - 1.0)
            }
        }
        SchedulerKind::Exponential => {
            if total == 1 {
                1.0
            } else {
                eta_min.powf((n as f64 - 1.0) / (total as f64 - 1.0))
            }
        }
        SchedulerKind::OneOverN => {
            let c = total as f64 / 10.0;
            (c / n.max(1) as f64).min(1.0)
        }
    }
}
