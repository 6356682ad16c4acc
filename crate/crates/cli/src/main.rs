use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gmflow_core::analysis::{NoiseSpec, PathologyParams};
use gmflow_core::experiment::{execute_run, plotdata, run_analysis, AnalysisRequest, PlotKind};
use gmflow_core::integrator::SchedulerKind;
use gmflow_core::{preset, presets, Error, ErrorClass, Result, RunManifest};

const OUTPUT_ROOT_VAR: &str = "GMFLOW_OUTPUT_ROOT";

/// Gaussian-mixture variational inference with a derivative-free natural-gradient flow.
#[derive(Debug, Parser)]
#[command(name = "gmflow", version)]
struct Cli {
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Root for default output directories.
    #[arg(long, global = true, env = OUTPUT_ROOT_VAR, default_value = "runs")]
    output_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute a manifest (or a named preset) and write its artifacts.
    Run(RunArgs),
    /// List preset names, optionally writing each preset's manifest.
    Presets {
        /// Directory to write `<name>.toml` manifests into.
        #[arg(long)]
        write: Option<PathBuf>,
    },
    /// Run one of the Gaussian-recursion analyses and write its report.
    Analyze(AnalyzeArgs),
    /// Extract plot data from a finished run directory.
    Plotdata {
        /// Run directory written by `gmflow run`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        which: PlotWhich,
        /// Defaults to `<run>/plotdata`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlotWhich {
    Marginal,
    TvSeries,
    DarcyFields,
    Weights,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AnalysisKind {
    NoiseFree,
    Pathology,
    Stochastic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scheduler {
    StableCosine,
    StableLinear,
    Exponential,
    Constant,
    OneOverN,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(value_enum)]
    kind: AnalysisKind,
    /// Defaults to `<output root>/analysis_<kind>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Diagonal of Σ₀, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1e6, 1e-6])]
    sigma0: Vec<f64>,
    /// Initial whitened mean offset; zeros when omitted.
    #[arg(long, value_delimiter = ',')]
    v0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.9)]
    dt_max: f64,
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    /// Tolerances for the noise-free report.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-6])]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 100.0)]
    sigma0_collapse: f64,
    #[arg(long, default_value_t = 1.1)]
    sigma0_oscillate: f64,
    #[arg(long, default_value_t = 0.5)]
    omega_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    w_scale: f64,
    #[arg(long, value_enum, default_value = "one-over-n")]
    scheduler: Scheduler,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    /// Number of seeds; seeds are `0..seeds`.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
}

fn scheduler_kind(s: Scheduler) -> SchedulerKind {
    match s {
        Scheduler::StableCosine => SchedulerKind::StableCosine,
        Scheduler::StableLinear => SchedulerKind::StableLinear,
        Scheduler::Exponential => SchedulerKind::Exponential,
        Scheduler::Constant => SchedulerKind::Constant,
        Scheduler::OneOverN => SchedulerKind::OneOverN,
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Io => 4,
    }
}

fn run_dir(manifest: &RunManifest, out: Option<PathBuf>, root: &Path) -> PathBuf {
    match (out, &manifest.output_dir) {
        (Some(o), _) => o,
        (None, Some(d)) if d.is_absolute() => d.clone(),
        (None, Some(d)) => root.join(d),
        (None, None) => root.join(&manifest.name),
    }
}

fn cmd_run(args: RunArgs, root: &Path) -> Result<()> {
    let (mut manifest, base) = match (&args.manifest, &args.preset) {
        (Some(path), _) => {
            let m = RunManifest::load(path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (m, base)
        }
        (None, Some(name)) => {
            let m = preset(name)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {name:?}")))?;
            (m, PathBuf::from("."))
        }
        (None, None) => unreachable!("clap requires one of --manifest and --preset"),
    };
    if let Some(seed) = args.seed {
        manifest.config.seed = seed;
    }
    let dir = run_dir(&manifest, args.out, root);
    log::info!("writing {} to {}", manifest.name, dir.display());
    let summary = execute_run(&manifest, &base, &dir)?;
    log::info!(
        "{}: finished {} iterations",
        manifest.name,
        summary.iterations
    );
    Ok(())
}

fn cmd_presets(write: Option<PathBuf>) -> Result<()> {
    if let Some(dir) = &write {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for m in presets() {
        println!("{}", m.name);
        if let Some(dir) = &write {
            m.save(&dir.join(format!("{}.toml", m.name)))?;
        }
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs, root: &Path) -> Result<()> {
    let v0 = a.v0.clone().unwrap_or_else(|| vec![0.0; a.sigma0.len()]);
    let (req, tag) = match a.kind {
        AnalysisKind::NoiseFree => (
            AnalysisRequest::NoiseFree {
                sigma0_diag: a.sigma0,
                v0,
                dt_max: a.dt_max,
                beta: a.beta,
                eps: a.eps,
            },
            "noise_free",
        ),
        AnalysisKind::Pathology => (
            AnalysisRequest::Pathology(PathologyParams {
                sigma0_collapse: a.sigma0_collapse,
                sigma0_oscillate: a.sigma0_oscillate,
                dt_max: a.dt_max,
                beta: a.beta,
            }),
            "pathology",
        ),
        AnalysisKind::Stochastic => (
            AnalysisRequest::Stochastic {
                sigma0_diag: a.sigma0,
                v0,
                noise: NoiseSpec {
                    omega_scale: a.omega_scale,
                    w_scale: a.w_scale,
                },
                scheduler: scheduler_kind(a.scheduler),
                n_steps: a.steps,
                seeds: (0..a.seeds).collect(),
                dt_max: a.dt_max,
                beta: a.beta,
            },
            "stochastic",
        ),
    };
    let out = a
        .out
        .unwrap_or_else(|| root.join(format!("analysis_{tag}")));
    for f in run_analysis(&req, &out)? {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_plotdata(run: PathBuf, which: PlotWhich, out: Option<PathBuf>) -> Result<()> {
    let kind = match which {
        PlotWhich::Marginal => PlotKind::Marginal,
        PlotWhich::TvSeries => PlotKind::TvSeries,
        PlotWhich::DarcyFields => PlotKind::DarcyFields,
        PlotWhich::Weights => PlotKind::Weights,
    };
    let out = out.unwrap_or_else(|| run.join("plotdata"));
    for f in plotdata(&run, kind, &out)? {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let root = cli.output_root;
    match cli.command {
        Command::Run(args) => cmd_run(args, &root),
        Command::Presets { write } => cmd_presets(write),
        Command::Analyze(a) => cmd_analyze(a, &root),
        Command::Plotdata { run, which, out } => cmd_plotdata(run, which, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let text = s.to_string();
                if !msg.contains(&text) {
                    msg.push_str(": ");
                    msg.push_str(&text);
                }
                src = s.source();
            }
            eprintln!("gmflow: error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
