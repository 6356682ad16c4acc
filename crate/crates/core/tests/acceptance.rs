//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! ```text
//! cargo test --release -p gmflow-core --test acceptance            # all
//! cargo test --release -p gmflow-core --test acceptance -- 1 4 12  # a subset
//! ```

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use gmflow_core::analysis::{
    median, noise_free_experiment, single_term_pathologies, stochastic_experiment, NoiseSpec,
    PathologyParams, StochasticParams,
};
use gmflow_core::darcy::{solve_darcy, Grid2D, HalfGridField};
use gmflow_core::experiment::{execute_run, TRAJECTORY_FILE};
use gmflow_core::integrator::{run, run_with_observer, SchedulerKind};
use gmflow_core::manifest::BuiltTarget;
use gmflow_core::metrics::{
    darcy_errors, mixture_marginal_2d, reference_density_2d, scalar_marginal_stats, tv_distance,
};
use gmflow_core::{preset, MixtureState, Result, RunManifest, SpdMatrix, TargetPotential};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn c1() -> Verdict {
    let t = positivity_stress(1, 10_000, 50);
    verdict(
        t.failures == 0,
        format!(
            "{} calls, {} failures, {} re-factorized, max |E dt| {:.3e}",
            t.calls, t.failures, t.refactored, t.max_step_norm
        ),
    )
}

fn c2() -> Verdict {
    let mut worst = LockstepGap::default();
    for p in 0..20u64 {
        let d = 1 + (p as usize % 10);
        let g = lockstep_gap(1000 + p, d, 100);
        worst.state = worst.state.max(g.state);
        worst.dt = worst.dt.max(g.dt);
    }
    verdict(
        worst.state <= 1e-12 && worst.dt <= 1e-12,
        format!(
            "max state gap {:.3e}, max dt gap {:.3e}",
            worst.state, worst.dt
        ),
    )
}

fn iterations(scale: f64, eps: f64) -> usize {
    let sigma0 = SpdMatrix::scaled_identity(1, scale).unwrap();
    noise_free_experiment(&sigma0, &DVector::zeros(1), 0.9, 0.9, eps)
        .unwrap()
        .iterations
}

/// Least-squares slope of `N(ε)` against `ln(1/ε)` for `ε = 1e-4 … 1e-10`.
fn eps_slope(scale: f64) -> f64 {
    let pts: Vec<(f64, f64)> = (4..=10)
        .map(|k| {
            let eps = 10f64.powi(-k);
            ((1.0 / eps).ln(), iterations(scale, eps) as f64)
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn c3() -> Verdict {
    let n6 = iterations(1e6, 1e-6);
    let n3 = iterations(1e3, 1e-6);
    let ratio = n6 as f64 / n3 as f64;
    let slope = eps_slope(1e2);
    let slope4 = eps_slope(1e4);
    let measured = iterations(1e4, 1e-8) as f64 - iterations(1e4, 1e-4) as f64;
    let predicted = slope * (1e4f64).ln();
    let rel = (measured - predicted).abs() / predicted;
    verdict(
        ratio <= 2.5 && slope > 0.0 && rel <= 0.2,
        format!(
            "N(1e6)={n6}, N(1e3)={n3}, ratio {ratio:.3}; slope@1e2 {slope:.4}, slope@1e4 {slope4:.4}; \
             N(1e-8)-N(1e-4) at 1e4 = {measured} vs {predicted:.3} ({:.1}%)",
            100.0 * rel
        ),
    )
}

fn c4() -> Verdict {
    let r = single_term_pathologies(PathologyParams::default()).unwrap();
    let full = r.full_rule.iter().all(|t| t.monotone && t.converged);
    verdict(
        r.collapse_sigma1 <= 1e-30 && r.started_inside && r.left_band && full,
        format!(
            "collapse Σ₁ {:.3e}; oscillate Σ₁ {:.4} vs band ({:.4}, {:.4}); full rule monotone+converged: {full}",
            r.collapse_sigma1, r.oscillate_sigma1, r.band.0, r.band.1
        ),
    )
}

fn stochastic(kind: SchedulerKind) -> (f64, f64) {
    let params = StochasticParams {
        sigma0: SpdMatrix::from_diagonal(&[4.0, 0.25]).unwrap(),
        v0: DVector::from_vec(vec![1.0, -1.0]),
        noise: NoiseSpec {
            omega_scale: 0.5,
            w_scale: 0.5,
        },
        scheduler: kind,
        eta_min: 0.1,
        n_steps: 5000,
        seeds: (0..20).collect(),
        dt_max: 0.9,
        beta: 0.9,
    };
    let traces = stochastic_experiment(&params).unwrap();
    let at100: Vec<f64> = traces.iter().map(|t| t.at(100).sigma_error).collect();
    let last: Vec<f64> = traces.iter().map(|t| t.last().sigma_error).collect();
    (median(&at100), median(&last))
}

fn c5() -> Verdict {
    let (m100, mlast) = stochastic(SchedulerKind::OneOverN);
    let (c100, clast) = stochastic(SchedulerKind::Constant);
    verdict(
        mlast <= 0.1 * m100,
        format!(
            "one_over_n median ‖Σ−I‖_F: n=100 {m100:.4}, n=5000 {mlast:.4} (ratio {:.3}); \
             constant η: n=100 {c100:.4}, n=5000 {clast:.4} (ratio {:.3})",
            mlast / m100,
            clast / c100
        ),
    )
}

fn c6() -> Verdict {
    let mut worst = AffineGap::default();
    for seed in 0..5 {
        let g = affine_gap(seed, 50);
        worst.params = worst.params.max(g.params);
        worst.dt = worst.dt.max(g.dt);
        worst.condition = worst.condition.max(g.condition);
    }
    verdict(
        worst.params <= 1e-8 && worst.dt <= 1e-12 && worst.condition <= 100.0,
        format!(
            "5 transforms (max cond {:.1}): max parameter gap {:.3e}, max dt gap {:.3e}",
            worst.condition, worst.params, worst.dt
        ),
    )
}

fn c7() -> Verdict {
    let g = manifold_gap(7, 100);
    verdict(
        g.step_vs_exp <= 1e-12 && g.root_independence <= 1e-10,
        format!(
            "step vs exp_map {:.3e}, root independence {:.3e}",
            g.step_vs_exp, g.root_independence
        ),
    )
}

fn c8() -> Verdict {
    let nonzero = sticking_the_landing(8, 1000);
    verdict(
        nonzero == 0,
        format!("{nonzero} of 1000 batches gave nonzero g1 or E"),
    )
}

/// Runs a preset with the given seed and returns the final state and target.
fn run_preset(name: &str, seed: u64) -> Result<(MixtureState, BuiltTarget, RunManifest)> {
    let mut m = preset(name).expect("preset exists");
    m.config.seed = seed;
    let target = m.target.build()?;
    let initial = m.initial.build(m.target.dim(), seed, Path::new("."))?;
    let (state, _) = run(&m.config, target.potential(), initial)?;
    Ok((state, target, m))
}

fn final_tv(name: &str, seed: u64) -> Result<f64> {
    let (state, target, m) = run_preset(name, seed)?;
    let grid = m.grid().expect("analytic preset has a grid");
    let p = mixture_marginal_2d(&state, (0, 1), &grid)?;
    let q = reference_density_2d(target.potential(), &grid)?;
    tv_distance(&p, &q)
}

fn c9() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (d, tol, need) in [(2, 0.12, 8), (10, 0.15, 7)] {
        for case in ["a", "b", "c"] {
            let name = format!("case_{case}_{d}d");
            let tvs: Vec<f64> = (0..10)
                .map(|s| final_tv(&name, s).unwrap_or(f64::INFINITY))
                .collect();
            let ok = tvs.iter().filter(|t| **t <= tol).count();
            pass &= ok >= need;
            parts.push(format!(
                "{name} {ok}/10 ≤ {tol} (median {:.4}, max {:.4})",
                median(&tvs),
                tvs.iter().cloned().fold(0.0, f64::max)
            ));
            eprintln!("  [9] {}", parts.last().unwrap());
        }
    }
    for case in ["a", "b", "c"] {
        let name = format!("case_{case}_50d");
        let ok = run_preset(&name, 0).is_ok();
        pass &= ok;
        parts.push(format!("{name} {}", if ok { "ran" } else { "FAILED" }));
        eprintln!("  [9] {}", parts.last().unwrap());
    }
    verdict(pass, parts.join("; "))
}

fn c10() -> Verdict {
    let mut ok = 0;
    let mut stats = Vec::new();
    for seed in 0..10 {
        let (mean, var) = run_preset("funnel_2d", seed)
            .and_then(|(s, _, _)| scalar_marginal_stats(&s, 0))
            .unwrap_or((f64::NAN, f64::NAN));
        if mean.abs() <= 0.5 && (6.0..=12.0).contains(&var) {
            ok += 1;
        }
        stats.push(format!("({mean:.2}, {var:.2})"));
    }
    verdict(
        ok >= 8,
        format!(
            "{ok}/10 seeds with |mean| ≤ 0.5 and var ∈ [6,12]; (mean, var): {}",
            stats.join(" ")
        ),
    )
}

fn median_misfit(state: &MixtureState, target: &dyn TargetPotential) -> f64 {
    let v: Vec<f64> = state
        .means()
        .iter()
        .map(|m| target.try_evaluate(m.as_slice()).unwrap_or(f64::INFINITY))
        .collect();
    median(&v)
}

fn c11() -> Verdict {
    let m = preset("darcy_k5_small").expect("preset exists");
    let target = m.target.build().unwrap();
    let posterior = target.darcy().expect("darcy target").clone();
    let initial = m
        .initial
        .build(m.target.dim(), m.config.seed, Path::new("."))
        .unwrap();
    let mut at10 = f64::NAN;
    let pot = target.potential();
    let out = run_with_observer(&m.config, pot, initial, &mut |n, s, _| {
        if n == 10 {
            at10 = median_misfit(s, pot);
        }
        Ok(())
    });
    let Ok((state, _)) = out else {
        return verdict(false, format!("run failed: {:?}", out.err()));
    };
    let last = median_misfit(&state, pot);
    let errs = darcy_errors(&state, &posterior, &posterior.theta_ref).unwrap();
    let groups_ok = errs.group_count() == 2;
    let decay_ok = last <= 0.2 * at10;
    let err_ok = errs.groups.iter().all(|(_, e)| *e <= 0.5);
    let modes: Vec<String> = errs
        .modes
        .iter()
        .map(|e| format!("{:?}:{:.3}@w{:.3}", e.group, e.rel_error, e.weight))
        .collect();
    verdict(
        groups_ok && decay_ok && err_ok,
        format!(
            "(i) groups {} [{}]; (ii) median Φ_R {at10:.2} → {last:.2} (ratio {:.4}) [{}]; \
             (iii) group errors {:?} [{}]; modes {}",
            errs.group_count(),
            ok_str(groups_ok),
            last / at10,
            ok_str(decay_ok),
            errs.groups,
            ok_str(err_ok),
            modes.join(" ")
        ),
    )
}

fn ok_str(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fail"
    }
}

fn manufactured_error(n: usize) -> f64 {
    let grid = Grid2D::new(n).unwrap();
    let log_a = HalfGridField::from_fn(n, |x, y| 0.3 * (PI * x).cos() * (PI * y).sin());
    let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
    // −∇·(a∇p) for a = e^{0.3 cos πx sin πy}, p = sin πx sin πy.
    let source = |x: f64, y: f64| {
        let g = 0.3 * (PI * x).cos() * (PI * y).sin();
        let a = g.exp();
        let gx = -0.3 * PI * (PI * x).sin() * (PI * y).sin();
        let gy = 0.3 * PI * (PI * x).cos() * (PI * y).cos();
        let px = PI * (PI * x).cos() * (PI * y).sin();
        let py = PI * (PI * x).sin() * (PI * y).cos();
        let lap = -2.0 * PI * PI * exact(x, y);
        -a * (gx * px + gy * py + lap)
    };
    let p = solve_darcy(&log_a, &grid.interior_values(source), grid).unwrap();
    let h = grid.h();
    let mut err: f64 = 0.0;
    for j in 0..=n {
        for i in 0..=n {
            err = err.max((p.at(i, j) - exact(i as f64 * h, j as f64 * h)).abs());
        }
    }
    err
}

fn c12() -> Verdict {
    let ratio = manufactured_error(32) / manufactured_error(64);
    let m = preset("darcy_k5_small").expect("preset exists");
    let target = m.target.build().unwrap();
    let posterior = target.darcy().expect("darcy target");
    let mut r = rng(12);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let theta: Vec<f64> = (0..posterior.basis.len())
            .map(|_| 2.0 * r.sample::<f64, _>(StandardNormal))
            .collect();
        let a = posterior.try_evaluate(&theta).unwrap();
        let b = posterior
            .try_evaluate(&posterior.mirror_coeffs(&theta))
            .unwrap();
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    verdict(
        (3.5..=4.5).contains(&ratio) && worst <= 1e-10,
        format!("convergence ratio {ratio:.4}; max relative mirror gap {worst:.3e}"),
    )
}

fn c13() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let m = preset("case_b_2d").expect("preset exists");
    let mut tables = Vec::new();
    for threads in [1, 2, 4] {
        let out = dir.path().join(format!("t{threads}"));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| execute_run(&m, Path::new("."), &out))
            .unwrap();
        tables.push(std::fs::read(out.join(TRAJECTORY_FILE)).unwrap());
    }
    let same = tables.windows(2).all(|w| w[0] == w[1]);
    verdict(
        same && !tables[0].is_empty(),
        format!(
            "case_b_2d trajectory tables ({} bytes) identical across 1, 2, 4 threads: {same}",
            tables[0].len()
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Verdict, Option<f64>);

const CRITERIA: [Criterion; 13] = [
    (1, "positivity stress", c1, Some(10.0)),
    (2, "oracle lock-step", c2, Some(5.0)),
    (3, "log-scaling of iteration counts", c3, Some(5.0)),
    (4, "single-term step-rule pathologies", c4, Some(1.0)),
    (5, "noisy recursion decay", c5, Some(30.0)),
    (6, "affine invariance", c6, Some(10.0)),
    (7, "mirror-descent and root independence", c7, Some(5.0)),
    (8, "sticking the landing", c8, Some(1.0)),
    (9, "cases A/B/C total variation", c9, None),
    (10, "funnel marginal statistics", c10, None),
    (11, "Darcy desk-scale inversion", c11, None),
    (12, "solver verification", c12, Some(30.0)),
    (13, "determinism across threads", c13, Some(60.0)),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, f, budget) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let v = f();
        let secs = t0.elapsed().as_secs_f64();
        let in_time = budget.is_none_or(|b| secs <= b);
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget_note = match budget {
            Some(b) if !in_time => format!(", over the {b} s budget"),
            _ => String::new(),
        };
        println!(
            "{} criterion {id:>2} ({name}): {} [{secs:.1} s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
