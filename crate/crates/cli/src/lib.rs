//! `pullin`: run configs in, CSV/JSON/PGM/PPM artifacts out.

pub mod config;
pub mod error;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use pullin_core::basins::{self, BasinGrid, CellClass};
use pullin_core::continuation::{find_c_star, ContinuationResult};
use pullin_core::poincare::{self, cycle_points, find_orbit, pss_scan, seed_line, SeedTrace};
use pullin_core::thresholds::ThresholdReport;
use pullin_core::{Integrator, PeriodicOrbit, PoincareMapSpec, State};
use serde::{Deserialize, Serialize};

pub use config::{Format, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pullin", version, about = "Periodic orbits, basins and pull-in analysis for a forced MEMS oscillator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON run config.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override a config field by dotted path, e.g. `--set grid.nx=100`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads for scans and sweeps; defaults to the machine's parallelism.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    /// Artifact formats to write (repeatable; overrides `emit`).
    #[arg(long, global = true, value_enum)]
    pub format: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Closed-form existence, amplitude and pull-in criteria.
    Thresholds,
    /// Poincaré section scan from a seed fan.
    Pss,
    /// Newton search for an nT-periodic orbit.
    FindOrbit,
    /// Basin / amplitude classification on a grid of initial conditions.
    Basins,
    /// Critical damping at which an orbit disappears.
    Cstar,
    /// One trajectory, sampled uniformly in time.
    Simulate,
}

impl Command {
    fn block(self) -> &'static str {
        match self {
            Command::Thresholds => "thresholds",
            Command::Pss => "scan",
            Command::FindOrbit => "orbit",
            Command::Basins => "grid",
            Command::Cstar => "continuation",
            Command::Simulate => "simulate",
        }
    }

    /// Formats this command can write, the first group being the default.
    fn formats(self) -> (&'static [Format], &'static [Format]) {
        use Format::*;
        match self {
            Command::Thresholds => (&[Json], &[Json]),
            Command::Pss => (&[Csv], &[Csv, Json, Pgm]),
            Command::FindOrbit => (&[Json], &[Json, Csv]),
            Command::Basins => (&[Csv, Pgm, Ppm], &[Csv, Json, Pgm, Ppm]),
            Command::Cstar => (&[Json], &[Json, Csv]),
            Command::Simulate => (&[Csv, Json], &[Csv, Json]),
        }
    }
}

/// Where artifacts go and which formats are wanted.
struct Sink {
    dir: PathBuf,
    formats: Vec<Format>,
    written: Vec<PathBuf>,
}

impl Sink {
    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn write(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io = |source| CliError::Io { path: path.display().to_string(), source };
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        body(&mut w).and_then(|_| w.flush()).map_err(io)?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("pullin: {e}");
            e.exit_code()
        }
    }
}

/// Execute one command; returns the artifacts written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = config::load(cli.config.as_deref(), &cli.overrides)?;
    cfg.require_block(cli.command.block())?;
    let (default, allowed) = cli.command.formats();
    // `--format` is strict; a config's `emit` list is read as "whatever of
    // these applies", so one recipe can feed several commands.
    let mut formats: Vec<Format> = if !cli.format.is_empty() {
        if let Some(bad) = cli.format.iter().find(|f| !allowed.contains(f)) {
            return Err(CliError::Config(format!("format {bad:?} is not produced by this command")));
        }
        cli.format.clone()
    } else {
        let picked: Vec<Format> = cfg.emit.iter().copied().filter(|f| allowed.contains(f)).collect();
        if picked.is_empty() {
            default.to_vec()
        } else {
            picked
        }
    };
    formats.sort();
    formats.dedup();
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    let mut sink = Sink { dir, formats, written: Vec::new() };

    let pool = match cli.workers {
        Some(0) => return Err(CliError::Config("--workers must be at least 1".into())),
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?,
        ),
        None => None,
    };
    let mut go = || match cli.command {
        Command::Thresholds => cmd_thresholds(&cfg, &mut sink),
        Command::Pss => cmd_pss(&cfg, &mut sink),
        Command::FindOrbit => cmd_find_orbit(&cfg, &mut sink),
        Command::Basins => cmd_basins(&cfg, &mut sink),
        Command::Cstar => cmd_cstar(&cfg, &mut sink),
        Command::Simulate => cmd_simulate(&cfg, &mut sink),
    };
    match pool {
        Some(p) => p.install(go)?,
        None => go()?,
    }
    Ok(sink.written)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_else(|| "-".into())
}

fn cmd_thresholds(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let r = ThresholdReport::new(&cfg.model);
    let verdict = serde_json::to_value(&r.exists_t_periodic).map_err(|e| CliError::Config(e.to_string()))?;
    let rows: Vec<(&str, String)> = vec![
        ("V_m", format!("{:?}", r.v_min)),
        ("V_M", format!("{:?}", r.v_max)),
        ("A_alpha", format!("{:?}", r.a_alpha)),
        ("V_M^2", format!("{:?}", r.v_max * r.v_max)),
        ("T-periodic orbit", verdict.to_string()),
        ("amplitude upper", opt(r.amp_upper.and_then(|u| u.bound))),
        ("amplitude lower (first)", opt(r.amp_lower_bounds.map(|l| l.first))),
        ("amplitude lower (second)", opt(r.amp_lower_bounds.and_then(|l| l.second))),
        ("period floor", format!("{:?}", r.period_floor)),
        ("pull-in sufficient", r.pull_in_sufficient.to_string()),
        ("pull-in time bound", opt(r.pull_in_time_bound)),
        ("static threshold", format!("{:?}", r.static_threshold)),
    ];
    for (k, v) in rows {
        println!("{k:<26}{v}");
    }
    for f in &r.flags {
        println!("flag: {f}");
    }
    if sink.wants(Format::Json) {
        sink.json("thresholds.json", &r)?;
    }
    Ok(())
}

fn map_spec(cfg: &RunConfig, n: usize) -> Result<PoincareMapSpec, CliError> {
    Ok(PoincareMapSpec::new(cfg.model.clone(), cfg.integrator.clone(), n)?)
}

/// JSON form of one scan trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seed_id: usize,
    pub termination: String,
    pub t_event: Option<f64>,
    pub points: Vec<[f64; 2]>,
}

fn cmd_pss(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let scan = cfg.scan.as_ref().expect("block checked");
    let mut seeds = match &scan.line {
        Some(l) => seed_line(l.from, l.to, l.count),
        None => Vec::new(),
    };
    seeds.extend(scan.points.iter().copied());
    if seeds.is_empty() {
        return Err(CliError::Config("scan block defines no seeds".into()));
    }
    let traces = pss_scan(&map_spec(cfg, scan.n)?, &seeds, scan.iterations)?;
    let mut ends: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &traces {
        *ends.entry(t.termination.name()).or_default() += 1;
    }
    let total: usize = traces.iter().map(|t| t.points.len()).sum();
    println!("seeds {}  section points {}", traces.len(), total);
    for (k, v) in &ends {
        println!("  {k:<12}{v}");
    }
    if sink.wants(Format::Csv) {
        sink.write("pss.csv", |w| poincare::write_pss_csv(w, &traces))?;
    }
    if sink.wants(Format::Json) {
        let recs: Vec<TraceRecord> = traces
            .iter()
            .map(|t| TraceRecord {
                seed_id: t.seed_id,
                termination: t.termination.name().to_string(),
                t_event: t.termination.event_time().filter(|x| x.is_finite()),
                points: t.points.clone(),
            })
            .collect();
        sink.json("pss.json", &recs)?;
    }
    if sink.wants(Format::Pgm) {
        let raster = scan.raster.clone().unwrap_or_else(|| bounding_raster(&traces));
        sink.write("pss.pgm", |w| write_density_pgm(w, &traces, &raster))?;
    }
    Ok(())
}

fn bounding_raster(traces: &[SeedTrace]) -> config::Raster {
    let (mut x0, mut x1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in traces.iter().flat_map(|t| &t.points) {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        v0 = v0.min(p[1]);
        v1 = v1.max(p[1]);
    }
    let pad = |lo: f64, hi: f64| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    config::Raster { x_range: pad(x0, x1), v_range: pad(v0, v1), nx: 400, nv: 400 }
}

/// Hit counts per pixel, scaled linearly so the busiest pixel is 255; empty pixels are 0.
fn write_density_pgm<W: Write>(w: &mut W, traces: &[SeedTrace], r: &config::Raster) -> std::io::Result<()> {
    let mut hits = vec![0u64; r.nx * r.nv];
    for p in traces.iter().flat_map(|t| &t.points) {
        let fi = (p[0] - r.x_range.0) / (r.x_range.1 - r.x_range.0) * r.nx as f64;
        let fj = (p[1] - r.v_range.0) / (r.v_range.1 - r.v_range.0) * r.nv as f64;
        if fi >= 0.0 && fj >= 0.0 && fi < r.nx as f64 && fj < r.nv as f64 {
            hits[fj as usize * r.nx + fi as usize] += 1;
        }
    }
    let top = hits.iter().copied().max().unwrap_or(0).max(1) as f64;
    writeln!(w, "P2\n{} {}\n255", r.nx, r.nv)?;
    for j in (0..r.nv).rev() {
        let row: Vec<String> = hits[j * r.nx..(j + 1) * r.nx]
            .iter()
            .map(|&h| if h == 0 { 0 } else { ((h as f64 / top * 255.0).round() as u32).max(1) })
            .map(|g| g.to_string())
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

fn print_orbit(o: &PeriodicOrbit) {
    println!("n          {}", o.n);
    println!("x          {:?}", o.point.x);
    println!("v          {:?}", o.point.v);
    for (k, m) in o.multipliers.iter().enumerate() {
        println!("mu{}        {:?} {:+?}i  |mu| = {:?}", k + 1, m.re, m.im, m.norm());
    }
    println!("det        {:?}", o.det());
    println!("stable     {}", o.stable);
    println!("residual   {:e}", o.residual);
}

fn cmd_find_orbit(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let ob = cfg.orbit.as_ref().expect("block checked");
    let spec = map_spec(cfg, ob.n)?;
    let orbit = find_orbit(&spec, ob.guess)?;
    print_orbit(&orbit);
    if sink.wants(Format::Json) {
        sink.json("orbit.json", &orbit)?;
    }
    if sink.wants(Format::Csv) {
        let pts = cycle_points(&spec, &orbit)?;
        sink.write("orbit_cycle.csv", |w| {
            writeln!(w, "k,x,v")?;
            for (k, p) in pts.iter().enumerate() {
                writeln!(w, "{k},{:?},{:?}", p[0], p[1])?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_basins(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let gb = cfg.grid.as_ref().expect("block checked");
    let mut attractors = gb.attractors.clone().unwrap_or_default();
    for g in &gb.attractor_guesses {
        let o = find_orbit(&map_spec(cfg, g.n)?, g.guess)?;
        println!(
            "attractor {}: n = {} at ({:?}, {:?}), stable = {}",
            attractors.len(),
            o.n,
            o.point.x,
            o.point.v,
            o.stable
        );
        attractors.push(o);
    }
    let spec = cfg.grid_spec((!attractors.is_empty()).then_some(attractors)).expect("block checked");
    let grid = basins::sweep(&cfg.model, &cfg.integrator, &spec)?;
    print_fractions(&grid);
    if sink.wants(Format::Csv) {
        sink.write("basins.csv", |w| grid.write_csv(w))?;
    }
    if sink.wants(Format::Json) {
        sink.json("basins.json", &grid)?;
    }
    if sink.wants(Format::Pgm) {
        sink.write("basins.pgm", |w| grid.write_pgm(w))?;
    }
    if sink.wants(Format::Ppm) {
        sink.write("basins.ppm", |w| grid.write_ppm(w))?;
    }
    Ok(())
}

fn print_fractions(grid: &BasinGrid) {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in &grid.cells {
        *counts.entry(c.class.label()).or_default() += 1;
    }
    println!("{:<14}{:>8}{:>10}", "class", "cells", "fraction");
    for (label, n) in &counts {
        println!("{label:<14}{n:>8}{:>10.4}", *n as f64 / grid.cells.len() as f64);
    }
    if let Some((i, j)) = grid.locate(0.0, 0.0) {
        let origin: CellClass = grid.cell(i, j).class;
        println!("origin cell   {}", origin.label());
    }
}

fn cmd_cstar(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let cb = cfg.continuation.as_ref().expect("block checked");
    let spec = map_spec(cfg, cb.n)?;
    let seed = find_orbit(&spec, cb.guess)?;
    let r: ContinuationResult = find_c_star(&spec, &seed, cb.c_hi)?;
    println!("{:>5}  {:<24}{:<11}{}", "step", "c", "converged", "residual");
    for (k, s) in r.steps.iter().enumerate() {
        println!("{k:>5}  {:<24}{:<11}{}", format!("{:?}", s.c), s.converged, opt(s.residual));
    }
    println!("n = {}  omega = {:?}", r.n, r.omega);
    println!("c* = {:?}  bracket = ({:?}, {:?})", r.c_star, r.bracket.0, r.bracket.1);
    println!("multiplier gap at last c = {:?}", r.multiplier_gap);
    if sink.wants(Format::Json) {
        sink.json("cstar.json", &r)?;
    }
    if sink.wants(Format::Csv) {
        sink.write("cstar_steps.csv", |w| {
            writeln!(w, "c,converged,residual")?;
            for s in &r.steps {
                writeln!(w, "{:?},{},{}", s.c, s.converged, s.residual.map(|x| format!("{x:?}")).unwrap_or_default())?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, sink: &mut Sink) -> Result<(), CliError> {
    let sb = cfg.simulate.as_ref().expect("block checked");
    let it = Integrator::new(&cfg.model, &cfg.integrator)?;
    let t_end = sb.t_end.unwrap_or(sb.t0 + cfg.integrator.max_time.unwrap_or(100.0 * cfg.model.period()));
    if !(t_end > sb.t0) {
        return Err(CliError::Config(format!("t_end must exceed t0 = {}", sb.t0)));
    }
    let times: Vec<f64> = match sb.samples {
        0 => Vec::new(),
        1 => vec![sb.t0],
        m => (0..m).map(|k| sb.t0 + (t_end - sb.t0) * k as f64 / (m - 1) as f64).collect(),
    };
    let out = it.integrate(State::new(sb.initial[0], sb.initial[1], sb.t0), t_end, &times)?;
    let rec = out.record();
    println!("outcome    {}", rec.kind);
    println!("t_event    {}", opt(rec.t_event));
    println!("final      ({:?}, {:?}) at t = {:?}", out.final_state.x, out.final_state.v, out.final_state.t);
    if sink.wants(Format::Csv) {
        sink.write("trajectory.csv", |w| {
            writeln!(w, "t,x,v")?;
            for s in &out.samples {
                writeln!(w, "{:?},{:?},{:?}", s.t, s.x, s.v)?;
            }
            Ok(())
        })?;
    }
    if sink.wants(Format::Json) {
        sink.json("outcome.json", &rec)?;
    }
    Ok(())
}
