//! Running manifests to disk, the analysis reports, and plot data.
//!
//! Tables are comma-delimited with one header row. Matrices carry a two-line
//! `#` header: `rows cols`, then `x_min x_max y_min y_max`; row `j` holds the
//! values at the `j`-th `y` coordinate.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::analysis::{
    median, noise_free_experiment, single_term_pathologies, stochastic_experiment, NoiseSpec,
    PathologyParams, StochasticParams,
};
use crate::darcy::DarcyPosterior;
use crate::error::{Error, Result};
use crate::integrator::{anneal_init, run_with_observer, SchedulerKind, StepDiagnostics};
use crate::manifest::{BuiltTarget, InitialSpec, RunManifest};
use crate::metrics::{
    darcy_errors, mixture_marginal_2d, reference_density_2d, scalar_marginal_stats, tv_distance,
    GridDensity2D, GridSpec, SymmetryGroup,
};
use crate::mixture::MixtureState;
use crate::spd::SpdMatrix;

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const ANNEAL_FILE: &str = "anneal.csv";
pub const DARCY_MODES_FILE: &str = "darcy_modes.csv";
pub const INITIAL_STATE_FILE: &str = "initial_state.toml";
pub const START_STATE_FILE: &str = "start_state.toml";
pub const FINAL_STATE_FILE: &str = "final_state.toml";
pub const POSTERIOR_FILE: &str = "posterior.toml";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Shortest round-trip text of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Delimited table writer with a single header row.
pub struct Table {
    path: PathBuf,
    out: BufWriter<File>,
    width: usize,
}

impl Table {
    pub fn create(path: &Path, header: &[String]) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut t = Table {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            width: header.len(),
        };
        t.line(header)?;
        Ok(t)
    }

    fn line(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.out, "{}", fields.join(",")).map_err(|e| Error::io(&self.path, e))
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        assert_eq!(fields.len(), self.width, "row width differs from header");
        self.line(fields)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Writes `values` (row-major, `rows × cols`) with the matrix header.
pub fn write_matrix(
    path: &Path,
    rows: usize,
    cols: usize,
    ranges: [f64; 4],
    values: &[f64],
) -> Result<()> {
    assert_eq!(values.len(), rows * cols);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "# {rows} {cols}").map_err(io)?;
    writeln!(out, "# {}", ranges.map(fmt_f64).join(" ")).map_err(io)?;
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols]
            .iter()
            .map(|v| fmt_f64(*v))
            .collect();
        writeln!(out, "{}", line.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a matrix written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<(usize, usize, [f64; 4], Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let bad = |m: &str| Error::parse(path, m);
    let dims: Vec<usize> = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| bad("missing dimension line"))?
        .split(' ')
        .map(|s| s.parse().map_err(|_| bad("bad dimension")))
        .collect::<Result<_>>()?;
    let ranges: Vec<f64> = lines
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or_else(|| bad("missing range line"))?
        .split(' ')
        .map(|s| s.parse().map_err(|_| bad("bad range")))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = lines
        .flat_map(|l| l.split(','))
        .map(|s| s.parse().map_err(|_| bad("bad value")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 || ranges.len() != 4 || values.len() != dims[0] * dims[1] {
        return Err(bad("matrix shape does not match its header"));
    }
    Ok((
        dims[0],
        dims[1],
        [ranges[0], ranges[1], ranges[2], ranges[3]],
        values,
    ))
}

pub fn write_grid_density(path: &Path, g: &GridDensity2D) -> Result<()> {
    let s = g.spec();
    write_matrix(
        path,
        s.ny,
        s.nx,
        [s.x_min, s.x_max, s.y_min, s.y_max],
        g.values(),
    )
}

/// Reads a delimited table into its header and rows of raw fields.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    })?;
    let head = reader
        .headers()
        .map_err(|e| Error::parse(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((head, rows))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Metric evaluation prepared once per run.
struct MetricEvaluator<'a> {
    manifest: &'a RunManifest,
    reference: Option<GridDensity2D>,
    darcy: Option<&'a DarcyPosterior>,
    table: Table,
    modes: Option<Table>,
}

impl<'a> MetricEvaluator<'a> {
    fn new(manifest: &'a RunManifest, target: &'a BuiltTarget, dir: &Path) -> Result<Self> {
        let reference = match (manifest.metrics.tv, manifest.grid()) {
            (true, Some(grid)) if manifest.target.dim() >= 2 => {
                Some(reference_density_2d(target.potential(), &grid)?)
            }
            _ => None,
        };
        let darcy = target.darcy().filter(|_| manifest.metrics.darcy);
        let mut cols = header(&["n"]);
        if reference.is_some() {
            cols.push("tv".into());
        }
        if manifest.metrics.stats {
            cols.extend(header(&["mean_1", "var_1"]));
        }
        if darcy.is_some() {
            cols.extend(header(&[
                "groups",
                "median_misfit",
                "error_truth",
                "error_mirror",
            ]));
        }
        let modes = match darcy {
            Some(_) => Some(Table::create(
                &dir.join(DARCY_MODES_FILE),
                &header(&[
                    "n",
                    "k",
                    "group",
                    "rel_error",
                    "misfit",
                    "cov_frobenius",
                    "weight",
                ]),
            )?),
            None => None,
        };
        Ok(MetricEvaluator {
            manifest,
            reference,
            darcy,
            table: Table::create(&dir.join(METRICS_FILE), &cols)?,
            modes,
        })
    }

    fn due(&self, n: usize) -> bool {
        n.is_multiple_of(self.manifest.metrics.every) || n == self.manifest.config.n_iter
    }

    fn record(&mut self, n: usize, state: &MixtureState) -> Result<()> {
        let mut row = vec![n.to_string()];
        if let Some(reference) = &self.reference {
            let q = mixture_marginal_2d(state, (0, 1), reference.spec())?;
            row.push(fmt_f64(tv_distance(reference, &q)?));
        }
        if self.manifest.metrics.stats {
            let (m, v) = scalar_marginal_stats(state, 0)?;
            row.extend([fmt_f64(m), fmt_f64(v)]);
        }
        if let Some(post) = self.darcy {
            let errs = darcy_errors(state, post, &post.theta_ref)?;
            let misfits: Vec<f64> = errs.modes.iter().map(|m| m.misfit).collect();
            let group_err = |g: SymmetryGroup| {
                errs.groups
                    .iter()
                    .find(|(h, _)| *h == g)
                    .map_or(String::new(), |(_, e)| fmt_f64(*e))
            };
            row.extend([
                errs.group_count().to_string(),
                fmt_f64(median(&misfits)),
                group_err(SymmetryGroup::Truth),
                group_err(SymmetryGroup::Mirror),
            ]);
            let modes = self.modes.as_mut().expect("darcy table exists");
            for (k, m) in errs.modes.iter().enumerate() {
                let group = match m.group {
                    SymmetryGroup::Truth => "truth",
                    SymmetryGroup::Mirror => "mirror",
                };
                modes.row(&[
                    n.to_string(),
                    k.to_string(),
                    group.into(),
                    fmt_f64(m.rel_error),
                    fmt_f64(m.misfit),
                    fmt_f64(m.cov_frobenius),
                    fmt_f64(m.weight),
                ])?;
            }
        }
        self.table.row(&row)
    }

    fn finish(self) -> Result<()> {
        if let Some(m) = self.modes {
            m.finish()?;
        }
        self.table.finish()
    }
}

fn trajectory_header(k: usize) -> Vec<String> {
    let mut h = header(&["n", "dt", "eta", "max_e_norm"]);
    h.extend((0..k).map(|i| format!("w_{i}")));
    h.extend((0..k).map(|i| format!("fbar_{i}")));
    h
}

fn trajectory_row(d: &StepDiagnostics) -> Vec<String> {
    let mut r = vec![
        d.n.to_string(),
        fmt_f64(d.dt),
        fmt_f64(d.eta),
        fmt_f64(d.max_e_norm),
    ];
    r.extend(d.weights.iter().map(|v| fmt_f64(*v)));
    r.extend(d.f_bars.iter().map(|v| fmt_f64(*v)));
    r
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub final_state: MixtureState,
    pub iterations: usize,
}

/// The manifest as written next to the outputs: output directory fixed and
/// file references made absolute, so it re-runs from anywhere.
pub fn resolve_manifest(
    manifest: &RunManifest,
    base: &Path,
    out_dir: &Path,
) -> Result<RunManifest> {
    let mut m = manifest.clone();
    m.output_dir = Some(absolute(out_dir)?);
    if let InitialSpec::Explicit { path } = &m.initial {
        m.initial = InitialSpec::Explicit {
            path: absolute(&base.join(path))?,
        };
    }
    Ok(m)
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

/// Executes a manifest and writes every artifact under `out_dir`.
pub fn execute_run(manifest: &RunManifest, base: &Path, out_dir: &Path) -> Result<RunSummary> {
    manifest.validate(base)?;
    create_dir(out_dir)?;
    let resolved = resolve_manifest(manifest, base, out_dir)?;
    resolved.save(&out_dir.join(MANIFEST_FILE))?;
    let config = &manifest.config;
    log::info!("{}: building target", manifest.name);
    let target = manifest.target.build()?;
    if let Some(p) = target.darcy() {
        p.save(&out_dir.join(POSTERIOR_FILE))?;
    }
    let potential = target.potential();
    let initial = manifest
        .initial
        .build(manifest.target.dim(), config.seed, base)?;
    initial.save(&out_dir.join(INITIAL_STATE_FILE))?;

    let (start, anneal) = anneal_init(&initial, potential, config)?;
    if let Some(report) = &anneal {
        log::info!(
            "{}: annealed from T = {:.4e}",
            manifest.name,
            report.t_start
        );
        let mut t = Table::create(
            &out_dir.join(ANNEAL_FILE),
            &header(&["n", "temperature", "dt"]),
        )?;
        for (i, (temp, dt)) in report.steps.iter().enumerate() {
            t.row(&[(i + 1).to_string(), fmt_f64(*temp), fmt_f64(*dt)])?;
        }
        t.finish()?;
    }
    start.save(&out_dir.join(START_STATE_FILE))?;

    let snap_dir = out_dir.join(SNAPSHOT_DIR);
    if config.snapshot_every > 0 {
        create_dir(&snap_dir)?;
        start.save(&snap_dir.join(snapshot_name(0)))?;
    }
    let mut metrics = MetricEvaluator::new(manifest, &target, out_dir)?;
    metrics.record(0, &start)?;
    let mut traj = Table::create(
        &out_dir.join(TRAJECTORY_FILE),
        &trajectory_header(start.num_components()),
    )?;
    let mut timing = Table::create(&out_dir.join(TIMING_FILE), &header(&["n", "wall_time"]))?;

    let mut main = config.clone();
    main.anneal.enabled = false;
    main.snapshot_every = 0;
    let every = config.snapshot_every;
    let progress = (config.n_iter / 10).max(1);
    let mut observer = |n: usize, state: &MixtureState, diag: &StepDiagnostics| -> Result<()> {
        traj.row(&trajectory_row(diag))?;
        timing.row(&[n.to_string(), fmt_f64(diag.wall_time)])?;
        if every > 0 && n.is_multiple_of(every) {
            state.save(&snap_dir.join(snapshot_name(n)))?;
        }
        if metrics.due(n) {
            metrics.record(n, state)?;
        }
        if n.is_multiple_of(progress) {
            log::info!("{}: iteration {n}/{}", manifest.name, config.n_iter);
        }
        Ok(())
    };
    let (final_state, _) = run_with_observer(&main, potential, start, &mut observer)?;
    traj.finish()?;
    timing.finish()?;
    metrics.finish()?;
    final_state.save(&out_dir.join(FINAL_STATE_FILE))?;
    Ok(RunSummary {
        dir: out_dir.to_path_buf(),
        final_state,
        iterations: config.n_iter,
    })
}

pub fn snapshot_name(n: usize) -> String {
    format!("state_{n:06}.toml")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Marginal,
    TvSeries,
    DarcyFields,
    Weights,
}

fn load_run_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    RunManifest::from_toml(&text).map_err(|e| Error::parse(&path, e))
}

fn column(head: &[String], name: &str, path: &Path) -> Result<usize> {
    head.iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::parse(path, format!("no column {name}")))
}

/// Writes plot data for a finished run into `out` and returns the files written.
pub fn plotdata(run_dir: &Path, kind: PlotKind, out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let mut written = Vec::new();
    match kind {
        PlotKind::Marginal => {
            let manifest = load_run_manifest(run_dir)?;
            let state = MixtureState::load(&run_dir.join(FINAL_STATE_FILE))?;
            if state.dim() < 2 {
                return Err(Error::UnsupportedTarget(
                    "marginal plots need d >= 2".into(),
                ));
            }
            let grid = manifest.grid().unwrap_or_else(|| marginal_box(&state));
            let p = out.join("marginal.csv");
            write_grid_density(&p, &mixture_marginal_2d(&state, (0, 1), &grid)?)?;
            written.push(p);
            if manifest.grid().is_some() {
                if let Ok(target) = manifest.target.build() {
                    let p = out.join("reference_marginal.csv");
                    write_grid_density(&p, &reference_density_2d(target.potential(), &grid)?)?;
                    written.push(p);
                }
            }
            for (file, name) in [
                (FINAL_STATE_FILE, "component_means.csv"),
                (INITIAL_STATE_FILE, "initial_means.csv"),
            ] {
                let s = MixtureState::load(&run_dir.join(file))?;
                let p = out.join(name);
                write_means(&p, &s)?;
                written.push(p);
            }
        }
        PlotKind::TvSeries => {
            let path = run_dir.join(METRICS_FILE);
            let (head, rows) = read_table(&path)?;
            let (ni, ti) = (column(&head, "n", &path)?, column(&head, "tv", &path)?);
            let p = out.join("tv_series.csv");
            let mut t = Table::create(&p, &header(&["iteration", "tv"]))?;
            for r in rows {
                t.row(&[r[ni].clone(), r[ti].clone()])?;
            }
            t.finish()?;
            written.push(p);
        }
        PlotKind::Weights => {
            let path = run_dir.join(TRAJECTORY_FILE);
            let (head, rows) = read_table(&path)?;
            let keep: Vec<usize> = (0..head.len())
                .filter(|&i| head[i] == "n" || head[i].starts_with("w_"))
                .collect();
            let p = out.join("weights.csv");
            let mut t = Table::create(
                &p,
                &keep.iter().map(|&i| head[i].clone()).collect::<Vec<_>>(),
            )?;
            for r in rows {
                t.row(&keep.iter().map(|&i| r[i].clone()).collect::<Vec<_>>())?;
            }
            t.finish()?;
            written.push(p);
        }
        PlotKind::DarcyFields => {
            let post = DarcyPosterior::load(&run_dir.join(POSTERIOR_FILE))?;
            let state = MixtureState::load(&run_dir.join(FINAL_STATE_FILE))?;
            let errs = darcy_errors(&state, &post, &post.theta_ref)?;
            let n = post.grid.n + 1;
            let field = |theta: &[f64], name: &str, written: &mut Vec<PathBuf>| -> Result<()> {
                let p = out.join(name);
                write_matrix(
                    &p,
                    n,
                    n,
                    [0.0, 1.0, 0.0, 1.0],
                    &post.log_permeability_nodes(theta),
                )?;
                written.push(p);
                Ok(())
            };
            field(&post.theta_ref, "truth.csv", &mut written)?;
            field(
                &post.mirror_coeffs(&post.theta_ref),
                "mirror.csv",
                &mut written,
            )?;
            let w = state.weights();
            for (g, name) in [
                (SymmetryGroup::Truth, "recovered_truth.csv"),
                (SymmetryGroup::Mirror, "recovered_mirror.csv"),
            ] {
                let members: Vec<usize> = (0..errs.modes.len())
                    .filter(|&k| errs.modes[k].group == g)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let total: f64 = members.iter().map(|&k| w[k]).sum();
                let mut avg = DVector::zeros(state.dim());
                for &k in &members {
                    avg += &state.means()[k] * (w[k] / total);
                }
                field(avg.as_slice(), name, &mut written)?;
            }
        }
    }
    Ok(written)
}

fn marginal_box(state: &MixtureState) -> GridSpec {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for k in 0..state.num_components() {
        let c = state.covariance(k);
        for a in 0..2 {
            let s = 6.0 * c.as_matrix()[(a, a)].sqrt();
            lo[a] = lo[a].min(state.means()[k][a] - s);
            hi[a] = hi[a].max(state.means()[k][a] + s);
        }
    }
    GridSpec {
        x_min: lo[0],
        x_max: hi[0],
        y_min: lo[1],
        y_max: hi[1],
        nx: 200,
        ny: 200,
    }
}

fn write_means(path: &Path, state: &MixtureState) -> Result<()> {
    let mut t = Table::create(path, &header(&["k", "weight", "m_1", "m_2"]))?;
    for (k, (m, w)) in state.means().iter().zip(state.weights()).enumerate() {
        t.row(&[k.to_string(), fmt_f64(w), fmt_f64(m[0]), fmt_f64(m[1])])?;
    }
    t.finish()
}

/// Parameters of the three analysis reports.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisRequest {
    NoiseFree {
        sigma0_diag: Vec<f64>,
        v0: Vec<f64>,
        dt_max: f64,
        beta: f64,
        eps: Vec<f64>,
    },
    Pathology(PathologyParams),
    Stochastic {
        sigma0_diag: Vec<f64>,
        v0: Vec<f64>,
        noise: NoiseSpec,
        scheduler: SchedulerKind,
        n_steps: usize,
        seeds: Vec<u64>,
        dt_max: f64,
        beta: f64,
    },
}

fn check_v0(sigma0_diag: &[f64], v0: &[f64]) -> Result<(SpdMatrix, DVector<f64>)> {
    if v0.len() != sigma0_diag.len() {
        return Err(Error::DimensionMismatch {
            expected: sigma0_diag.len(),
            found: v0.len(),
        });
    }
    Ok((
        SpdMatrix::from_diagonal(sigma0_diag)?,
        DVector::from_column_slice(v0),
    ))
}

/// Runs an analysis report into `out` and returns the files written.
pub fn run_analysis(req: &AnalysisRequest, out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    match req {
        AnalysisRequest::NoiseFree {
            sigma0_diag,
            v0,
            dt_max,
            beta,
            eps,
        } => {
            let (sigma0, v0) = check_v0(sigma0_diag, v0)?;
            let summary_path = out.join("noise_free.csv");
            let trace_path = out.join("noise_free_trace.csv");
            let mut summary = Table::create(
                &summary_path,
                &header(&["eps", "iterations", "lambda_min", "lambda_max", "v0_norm"]),
            )?;
            let mut trace = Table::create(
                &trace_path,
                &header(&["eps", "n", "sigma_error", "v_norm", "dt"]),
            )?;
            let lmin = sigma0_diag.iter().copied().fold(f64::INFINITY, f64::min);
            let lmax = sigma0_diag
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            for &e in eps {
                let r = noise_free_experiment(&sigma0, &v0, *dt_max, *beta, e)?;
                summary.row(&[
                    fmt_f64(e),
                    r.iterations.to_string(),
                    fmt_f64(lmin),
                    fmt_f64(lmax),
                    fmt_f64(v0.norm()),
                ])?;
                for n in 0..=r.iterations {
                    let dt = if n == 0 { 0.0 } else { r.dts[n - 1] };
                    trace.row(&[
                        fmt_f64(e),
                        n.to_string(),
                        fmt_f64(r.sigma_errors[n]),
                        fmt_f64(r.v_norms[n]),
                        fmt_f64(dt),
                    ])?;
                }
            }
            summary.finish()?;
            trace.finish()?;
            Ok(vec![summary_path, trace_path])
        }
        AnalysisRequest::Pathology(params) => {
            let r = single_term_pathologies(*params)?;
            let path = out.join("pathology.csv");
            let mut t = Table::create(&path, &header(&["section", "quantity", "value"]))?;
            let mut put = |s: &str, q: &str, v: String| t.row(&[s.into(), q.into(), v]);
            put("a", "sigma0", fmt_f64(params.sigma0_collapse))?;
            put("a", "dt", fmt_f64(params.dt_max))?;
            put("a", "sigma1", fmt_f64(r.collapse_sigma1))?;
            put(
                "a",
                "full_rule_monotone",
                r.full_rule[0].monotone.to_string(),
            )?;
            put(
                "a",
                "full_rule_converged",
                r.full_rule[0].converged.to_string(),
            )?;
            put("b", "sigma0", fmt_f64(params.sigma0_oscillate))?;
            put("b", "dt", fmt_f64(r.oscillate_dt))?;
            put("b", "sigma1", fmt_f64(r.oscillate_sigma1))?;
            put("b", "band_low", fmt_f64(r.band.0))?;
            put("b", "band_high", fmt_f64(r.band.1))?;
            put("b", "started_inside", r.started_inside.to_string())?;
            put("b", "left_band", r.left_band.to_string())?;
            put(
                "b",
                "full_rule_monotone",
                r.full_rule[1].monotone.to_string(),
            )?;
            put(
                "b",
                "full_rule_converged",
                r.full_rule[1].converged.to_string(),
            )?;
            t.finish()?;
            Ok(vec![path])
        }
        AnalysisRequest::Stochastic {
            sigma0_diag,
            v0,
            noise,
            scheduler,
            n_steps,
            seeds,
            dt_max,
            beta,
        } => {
            let (sigma0, v0) = check_v0(sigma0_diag, v0)?;
            let traces = stochastic_experiment(&StochasticParams {
                sigma0,
                v0,
                noise: *noise,
                scheduler: *scheduler,
                eta_min: 0.1,
                n_steps: *n_steps,
                seeds: seeds.clone(),
                dt_max: *dt_max,
                beta: *beta,
            })?;
            let path = out.join("stochastic.csv");
            let mut t = Table::create(
                &path,
                &header(&["seed", "n", "sigma_error", "v_norm", "dt"]),
            )?;
            for tr in &traces {
                for r in &tr.rows {
                    t.row(&[
                        tr.seed.to_string(),
                        r.n.to_string(),
                        fmt_f64(r.sigma_error),
                        fmt_f64(r.v_norm),
                        fmt_f64(r.dt),
                    ])?;
                }
            }
            t.finish()?;
            Ok(vec![path])
        }
    }
}
