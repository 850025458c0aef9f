//! Command implementations shared by the binary and the Python bindings.
//! Each command writes its files into one output directory together with
//! a `manifest.json` that echoes the full configuration.

use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{named_points, BenchSection, InitSpec, RunConfig};
use crate::error::Error;
use crate::pde::{self, field_csv, gaussian_bump, GridPotential, PdeConfig};
use crate::potentials::{self, LatticeSpec, MorseParams, MorseVacancy, Potential};
use crate::search::{
    self, build_transition_graph, connect_saddles, gradient_descent, LabelTable, TransitionGraph,
};
use crate::sspd::{
    self, diagnostics_csv, initial_tangents, run_sspd, uniform_box_positions, Ensemble, SspdConfig,
};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(
    dir: &Path,
    name: &str,
    contents: &str,
    written: &mut Vec<String>,
) -> Result<(), Error> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(&path, contents).map_err(io_err(&path))?;
    written.push(name.to_string());
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a, S: Serialize> {
    command: &'a str,
    version: &'a str,
    threads: usize,
    seed: u64,
    elapsed_seconds: f64,
    files: &'a [String],
    summary: &'a S,
    config: &'a RunConfig,
}

fn write_manifest<S: Serialize>(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    started: Instant,
    files: &mut Vec<String>,
    summary: &S,
) -> Result<(), Error> {
    files.push("manifest.json".into());
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        seed: cfg.seed,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        files,
        summary,
        config: cfg,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&m)? + "\n").map_err(io_err(&path))
}

fn prepare_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Starting point for `Minimum` and `Point` initializations, relaxed when
/// requested. `None` for box initializations.
pub fn start_point(cfg: &RunConfig, pot: &dyn Potential) -> Result<Option<Vec<f64>>, Error> {
    let descent = &cfg.search.descent;
    match &cfg.init {
        InitSpec::Minimum { name } => {
            let x = named_points(&cfg.potential)?
                .into_iter()
                .find(|(n, _)| n == name)
                .map(|(_, x)| x)
                .ok_or_else(|| Error::Config(format!("unknown minimum '{name}'")))?;
            Ok(Some(gradient_descent(pot, &x, descent)?.position))
        }
        InitSpec::Point {
            coordinates,
            descend,
        } => {
            if *descend {
                Ok(Some(gradient_descent(pot, coordinates, descent)?.position))
            } else {
                Ok(Some(coordinates.clone()))
            }
        }
        InitSpec::Box { .. } => Ok(None),
    }
}

/// Initial positions and tangents for the SSPD ensemble.
pub fn initial_ensemble(
    cfg: &RunConfig,
    pot: &dyn Potential,
) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let sspd = cfg.effective_search().sspd;
    let n = sspd.n_particles;
    let d = pot.dim();
    let x = match (&cfg.init, start_point(cfg, pot)?) {
        (InitSpec::Box { lower, upper }, _) => uniform_box_positions(lower, upper, n, sspd.seed),
        (_, Some(x0)) => search::default_init(&x0, &sspd, cfg.search.init_spread).0,
        (_, None) => unreachable!("only box initializations have no start point"),
    };
    let y = initial_tangents(d, n, cfg.init_tangent.as_deref());
    Ok((x, y))
}

fn ensemble_csv(ens: &Ensemble) -> String {
    let mut s = String::from("particle,weight");
    for i in 0..ens.dim {
        let _ = write!(s, ",x_{i}");
    }
    for i in 0..ens.dim {
        let _ = write!(s, ",y_{i}");
    }
    s.push('\n');
    for n in 0..ens.len() {
        let _ = write!(s, "{n},{:.17e}", ens.w[n]);
        for v in ens.position(n).iter().chain(ens.tangent(n)) {
            let _ = write!(s, ",{v:.17e}");
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct SspdSummary {
    pub iterations: usize,
    pub resamples: usize,
    pub final_ess: f64,
    pub final_x_bar: Vec<f64>,
    pub final_y_bar: Option<Vec<f64>>,
    pub snapshots: Vec<usize>,
}

/// Plain SSPD: `diagnostics.csv`, ensemble snapshots under `snapshots/`
/// and the manifest.
pub fn cmd_sspd(cfg: &RunConfig, out: &Path) -> Result<SspdSummary, Error> {
    let started = Instant::now();
    cfg.validate()?;
    let pot = cfg.build_potential()?;
    let sspd = cfg.effective_search().sspd;
    let (x, y) = initial_ensemble(cfg, pot.as_ref())?;
    prepare_dir(out)?;
    let mut files = Vec::new();
    let mut snaps: Vec<(usize, String)> = Vec::new();
    let stride = cfg.snapshot_stride;
    let run = run_sspd(pot.as_ref(), &sspd, x, y, |ens, k| {
        if k == 0 || (stride > 0 && k % stride == 0) {
            snaps.push((k, ensemble_csv(ens)));
        }
        ControlFlow::Continue(())
    })?;
    // the state after the last step; for K = 0 this is the initial state
    let mut final_ens = run.ensemble.clone();
    final_ens.refresh_weights();
    if snaps.last().map(|s| s.0) != Some(sspd.max_iter) {
        snaps.push((sspd.max_iter, ensemble_csv(&final_ens)));
    }
    write_file(
        out,
        "diagnostics.csv",
        &diagnostics_csv(&run.diagnostics, pot.dim()),
        &mut files,
    )?;
    for (k, text) in &snaps {
        write_file(
            out,
            &format!("snapshots/ensemble_{k:06}.csv"),
            text,
            &mut files,
        )?;
    }
    let last = run
        .diagnostics
        .last()
        .expect("a final diagnostics row is always recorded");
    let summary = SspdSummary {
        iterations: sspd.max_iter,
        resamples: run.resample_count(),
        final_ess: last.ess,
        final_x_bar: last.x_bar.clone(),
        final_y_bar: last.y_bar.clone(),
        snapshots: snaps.iter().map(|s| s.0).collect(),
    };
    write_manifest(out, "sspd", cfg, started, &mut files, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchSummary {
    pub saddle_energies: Vec<f64>,
    pub minimum_energies: Vec<f64>,
    pub edges: usize,
    pub unconnected: usize,
    /// Exploration stopped on a budget with minima still queued.
    pub incomplete: bool,
    /// Iteration of the first successful local search (single runs only).
    pub first_success: Option<usize>,
}

/// Saddle search: SSPD-LS from the configured start, or the full worklist
/// exploration when `graph` is set. Writes `saddles.json`, `minima.json`,
/// `graph.json`, `graph.dot` and the manifest.
pub fn cmd_search(cfg: &RunConfig, out: &Path) -> Result<(SearchSummary, TransitionGraph), Error> {
    let started = Instant::now();
    cfg.validate()?;
    let pot = cfg.build_potential()?;
    let search_cfg = cfg.effective_search();
    let labels = LabelTable {
        entries: cfg.labels.clone(),
        tol: cfg.label_tol,
    };
    prepare_dir(out)?;
    let mut files = Vec::new();
    let (graph, first_success, launches) = if cfg.graph {
        let x0 = start_point(cfg, pot.as_ref())?.ok_or_else(|| {
            Error::Config("graph exploration needs a point or minimum initialization".into())
        })?;
        (
            build_transition_graph(pot.as_ref(), &[x0], &search_cfg, &labels)?,
            None,
            None,
        )
    } else {
        let (x, y) = initial_ensemble(cfg, pot.as_ref())?;
        let run = search::sspd_ls(pot.as_ref(), &search_cfg, x, y)?;
        let first = run.first_success_iteration();
        let seeds: Vec<Vec<f64>> = start_point(cfg, pot.as_ref())?.into_iter().collect();
        let graph = connect_saddles(pot.as_ref(), &seeds, run.saddles, &search_cfg, &labels)?;
        (graph, first, Some(run.launches))
    };
    let saddles: Vec<_> = graph.edges.iter().chain(&graph.unconnected).collect();
    write_file(
        out,
        "saddles.json",
        &(serde_json::to_string_pretty(&saddles)? + "\n"),
        &mut files,
    )?;
    write_file(
        out,
        "minima.json",
        &(serde_json::to_string_pretty(&graph.nodes)? + "\n"),
        &mut files,
    )?;
    write_file(
        out,
        "graph.json",
        &(serde_json::to_string_pretty(&graph)? + "\n"),
        &mut files,
    )?;
    write_file(out, "graph.dot", &graph.to_dot(), &mut files)?;
    if let Some(l) = &launches {
        write_file(
            out,
            "launches.json",
            &(serde_json::to_string_pretty(l)? + "\n"),
            &mut files,
        )?;
    }
    let summary = SearchSummary {
        saddle_energies: saddles.iter().map(|s| s.energy).collect(),
        minimum_energies: graph.nodes.iter().map(|n| n.energy).collect(),
        edges: graph.edges.len(),
        unconnected: graph.unconnected.len(),
        incomplete: graph.incomplete,
        first_success,
    };
    write_manifest(out, "search", cfg, started, &mut files, &summary)?;
    Ok((summary, graph))
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeSummary {
    pub equation: String,
    pub steps: usize,
    pub dt: f64,
    pub stability_bound: f64,
    pub final_time: f64,
    pub snapshot_times: Vec<f64>,
}

/// Finite-difference evolution of the configured equations. The time step
/// is checked against the stability bound before any stepping.
pub fn cmd_pde(cfg: &RunConfig, out: &Path) -> Result<Vec<PdeSummary>, Error> {
    let started = Instant::now();
    cfg.validate()?;
    let sec = cfg
        .pde
        .as_ref()
        .ok_or_else(|| Error::Config("configuration has no pde section".into()))?;
    let pot = cfg.build_potential()?;
    let gp = GridPotential::sample(pot.as_ref(), sec.grid)?;
    let bound = gp.stability_bound(sec.beta_inv);
    let dt = sec.dt.unwrap_or(bound);
    if dt > bound {
        return Err(crate::error::PdeError::Unstable { dt, bound }.into());
    }
    let pcfg = PdeConfig {
        beta_inv: sec.beta_inv,
        dt,
        t_final: sec.t_final,
        snapshot_times: sec.snapshot_times.clone(),
        coupling: sec.coupling,
    };
    prepare_dir(out)?;
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for &eq in &sec.equations {
        let comps = match eq {
            pde::Equation::FokkerPlanck => 1,
            pde::Equation::Witten => 2,
        };
        let init = gaussian_bump(sec.grid, comps, sec.center, sec.sigma0);
        let run = pde::solve(eq, &gp, &init, &pcfg)?;
        let tag = match eq {
            pde::Equation::FokkerPlanck => "fokker-planck",
            pde::Equation::Witten => "witten",
        };
        for snap in &run.snapshots {
            write_file(
                out,
                &format!("{tag}/t_{:012.3}.csv", snap.time),
                &field_csv(&snap.field),
                &mut files,
            )?;
        }
        summaries.push(PdeSummary {
            equation: tag.to_string(),
            steps: run.steps,
            dt: run.dt,
            stability_bound: bound,
            final_time: run.snapshots.last().map_or(0.0, |s| s.time),
            snapshot_times: run.snapshots.iter().map(|s| s.time).collect(),
        });
    }
    write_manifest(out, "pde", cfg, started, &mut files, &summaries)?;
    Ok(summaries)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub dimension: usize,
    pub seconds: f64,
    pub seconds_per_dimension: f64,
}

/// Relaxed vacancy lattice with `free_atoms` moving atoms.
pub fn vacancy_lattice(
    free_atoms: usize,
    fixed_width: f64,
    cutoff: Option<f64>,
) -> Result<MorseVacancy, Error> {
    let spec =
        LatticeSpec::triangular_vacancy(free_atoms, fixed_width, MorseParams::default(), cutoff)?;
    Ok(MorseVacancy::new(spec)?)
}

/// Times `iterations` SSPD iterations on each lattice size. The ensemble
/// starts as jitter around the unrelaxed lattice, which is enough for a
/// timing run. Each row keeps the fastest of `repeats` runs.
pub fn bench_rows(sec: &BenchSection, seed: u64) -> Result<Vec<BenchRow>, Error> {
    let mut rows = Vec::new();
    for &free in &sec.free_atoms {
        let pot = vacancy_lattice(free, sec.fixed_width, sec.cutoff)?;
        let d = pot.dim();
        let x0 = pot.spec().reference_coordinates();
        let cfg = SspdConfig {
            n_particles: sec.n_particles,
            max_iter: sec.iterations,
            seed,
            ..SspdConfig::vacancy()
        };
        let mut best = f64::INFINITY;
        for _ in 0..sec.repeats {
            let x = sspd::jittered_positions(
                &x0,
                cfg.n_particles,
                (2.0 * cfg.beta_inv * cfg.delta).sqrt(),
                seed,
            );
            let y = initial_tangents(d, cfg.n_particles, None);
            let t = Instant::now();
            run_sspd(&pot, &cfg, x, y, |_, _| ControlFlow::Continue(()))?;
            best = best.min(t.elapsed().as_secs_f64());
        }
        rows.push(BenchRow {
            dimension: d,
            seconds: best,
            seconds_per_dimension: best / d as f64,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("dimension,seconds,seconds_per_dimension\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.6e},{:.6e}",
            r.dimension, r.seconds, r.seconds_per_dimension
        );
    }
    s
}

/// Scaling benchmark: `bench.csv` and the manifest.
pub fn cmd_bench(cfg: &RunConfig, out: &Path) -> Result<Vec<BenchRow>, Error> {
    let started = Instant::now();
    cfg.validate()?;
    let sec = cfg
        .bench
        .as_ref()
        .ok_or_else(|| Error::Config("configuration has no bench section".into()))?;
    let rows = bench_rows(sec, cfg.seed)?;
    prepare_dir(out)?;
    let mut files = Vec::new();
    write_file(out, "bench.csv", &bench_csv(&rows), &mut files)?;
    write_manifest(out, "bench", cfg, started, &mut files, &rows)?;
    Ok(rows)
}

/// Text for `potentials info`.
pub fn potential_info(name: &str) -> Result<String, Error> {
    let pot = potentials::by_name(name, None)?;
    let descr = potentials::REGISTRY
        .iter()
        .find(|r| r.0 == name)
        .map_or("", |r| r.1);
    let mut s = String::new();
    let _ = writeln!(s, "name: {name}");
    let _ = writeln!(s, "description: {descr}");
    let _ = writeln!(s, "dimension: {}", pot.dim());
    let _ = writeln!(s, "zero modes: {}", pot.zero_mode_basis().len());
    let spec = crate::config::PotentialSpec {
        name: name.to_string(),
        lattice: None,
    };
    for (label, x) in named_points(&spec)? {
        match gradient_descent(pot.as_ref(), &x, &search::DescentConfig::default()) {
            Ok(m) => {
                let _ = writeln!(s, "minimum {label}: energy {:.6}", m.energy);
            }
            Err(e) => {
                let _ = writeln!(s, "minimum {label}: {e}");
            }
        }
    }
    Ok(s)
}

/// Output directory: the explicit one, the config's, or `runs/<command>`.
pub fn output_dir(explicit: Option<&Path>, cfg: &RunConfig, command: &str) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(command))
}
