//! Command-line surface of the `zkms` binary.
//!
//! Every command writes its outputs plus `manifest.json` into the output
//! directory. Exit status: 0 success, 1 numerical failure (or I/O), 2 usage
//! or configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::{read_config, RunConfig};
use crate::construction::construct;
use crate::error::{Result, ZkError};
use crate::evolution::{energy, mass, ConservationObserver, Evolver, EvolverConfig, Scheme};
use crate::functionals::{localized_budget, CutoffFamily};
use crate::grid::Grid;
use crate::groundstate::{decay_audit, multi_soliton, solve_ground_state, GroundStateCache, DEFAULT_TOL};
use crate::linearized::{random_test_field, LinearizedOperator, EIGEN_TOL};
use crate::modulation::{ModulationMode, Modulator};
use crate::output::{fmt_f64, modulation_lines, write_csv, write_ladder, RunManifest};
use crate::spectral::{self, Field};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "zkms", version, about = "Multi-soliton laboratory for the Zakharov-Kuznetsov equations")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for random test fields.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (`construct` defaults to the configured one).
    #[arg(long, global = true)]
    pub outdir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the ground state Q_c.
    GroundState(GroundStateArgs),
    /// Integrate a checkpoint between two times.
    Evolve(EvolveArgs),
    /// Ground eigenpair, kernel residuals and coercivity constants of L_c.
    Spectrum(SpectrumArgs),
    /// Modulate a checkpoint against the configured solitons.
    Modulate(ConfigFieldArgs),
    /// Run a backward-construction ladder.
    Construct(ConstructArgs),
    /// Localized mass/energy and distance to the soliton sum for a checkpoint.
    Diagnose(ConfigFieldArgs),
}

#[derive(Debug, Args)]
pub struct GroundStateArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub p: u32,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Box length per axis.
    #[arg(long = "box", default_value_t = 32.0)]
    pub box_length: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Checkpoint path (default: <outdir>/ground_state.zkc).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Start time (default: the checkpoint's time).
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub t1: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value = "etdrk4")]
    pub scheme: Scheme,
    /// Steps between series records.
    #[arg(long, default_value_t = 100)]
    pub cadence: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Mass/energy series CSV.
    #[arg(long)]
    pub series: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub p: u32,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long = "box", default_value_t = 32.0)]
    pub box_length: f64,
    #[arg(long, default_value_t = EIGEN_TOL)]
    pub tol: f64,
    /// Random constrained fields sampled for the coercivity quotient.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct ConfigFieldArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConstructArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let command_line = args.iter().map(|a| a.to_string_lossy()).collect::<Vec<_>>().join(" ");
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            // The pool can only be configured once per process.
            log::warn!("thread count not applied: {e}");
        }
    }
    let outdir = match &cli.command {
        Command::Construct(a) => match &cli.outdir {
            Some(d) => Ok(d.clone()),
            None => read_config(&a.config).map(|c| c.outdir),
        },
        _ => Ok(cli.outdir.clone().unwrap_or_else(|| PathBuf::from("."))),
    };
    let outdir = match outdir {
        Ok(d) => d,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let name = command_name(&cli.command);
    let mut manifest = RunManifest::new(name, &command_line);
    let started = Instant::now();
    let result = dispatch(&cli, &outdir, &mut manifest);
    manifest.wall_seconds = started.elapsed().as_secs_f64();
    let code = match &result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            manifest.fail(e);
            exit_code(e)
        }
    };
    if let Err(e) = manifest.write(&outdir) {
        eprintln!("error: cannot write manifest: {e}");
        return EXIT_NUMERICAL;
    }
    code
}

pub fn exit_code(e: &ZkError) -> i32 {
    if e.is_numerical() || matches!(e, ZkError::Io(_) | ZkError::Format(_)) {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GroundState(_) => "ground-state",
        Command::Evolve(_) => "evolve",
        Command::Spectrum(_) => "spectrum",
        Command::Modulate(_) => "modulate",
        Command::Construct(_) => "construct",
        Command::Diagnose(_) => "diagnose",
    }
}

fn dispatch(cli: &Cli, outdir: &Path, manifest: &mut RunManifest) -> Result<()> {
    std::fs::create_dir_all(outdir)?;
    match &cli.command {
        Command::GroundState(a) => ground_state(a, outdir, manifest),
        Command::Evolve(a) => evolve(a, outdir, manifest),
        Command::Spectrum(a) => spectrum(a, cli.seed, outdir, manifest),
        Command::Modulate(a) => modulate(a, outdir, manifest),
        Command::Construct(a) => construct_cmd(a, outdir, manifest),
        Command::Diagnose(a) => diagnose(a, outdir, manifest),
    }
}

/// Registers an output given by an arbitrary path: inside `outdir` it is
/// recorded relative to it, elsewhere by its full path.
fn record(manifest: &mut RunManifest, outdir: &Path, path: &Path) -> Result<()> {
    match path.strip_prefix(outdir) {
        Ok(rel) => manifest.add_output(outdir, &rel.to_string_lossy()),
        Err(_) => manifest.add_output(Path::new(""), &path.to_string_lossy()),
    }
}

fn uniform_grid(dim: usize, n: usize, box_length: f64) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::uniform(dim, box_length, n)?))
}

fn ground_state(a: &GroundStateArgs, outdir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let grid = uniform_grid(a.dim, a.n, a.box_length)?;
    manifest.grid_signature = Some(grid.signature());
    let gs = solve_ground_state(a.c, a.p, grid, a.tol)?;
    manifest.steps = gs.iterations as u64;
    let decay = decay_audit(&gs)?;
    let ckpt = a.out.clone().unwrap_or_else(|| outdir.join("ground_state.zkc"));
    Checkpoint { p: a.p, time: 0.0, field: gs.profile.clone() }.write_path(&ckpt)?;
    record(manifest, outdir, &ckpt)?;
    let csv = outdir.join("ground_state.csv");
    write_csv(
        &csv,
        &["c", "p", "peak", "mass", "energy", "residual", "decay_rate", "decay_rate_compensated"],
        &[vec![
            a.c,
            a.p as f64,
            gs.peak(),
            mass(&gs.profile),
            energy(&gs.profile, a.p),
            gs.residual_norm,
            decay.rate,
            decay.rate_compensated,
        ]],
    )?;
    manifest.add_output(outdir, "ground_state.csv")?;
    info!("ground state c={} p={}: residual {:e}", a.c, a.p, gs.residual_norm);
    Ok(())
}

fn evolve(a: &EvolveArgs, outdir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let ck = Checkpoint::read_path(&a.input)?;
    let grid = ck.field.grid().clone();
    manifest.grid_signature = Some(grid.signature());
    let cfg = EvolverConfig::new(a.dt).with_frame_speed(grid.comoving_speed()).with_scheme(a.scheme);
    let mut ev = Evolver::new(grid, ck.p, cfg)?;
    let mut cons = ConservationObserver::new(ck.p);
    let t0 = a.t0.unwrap_or(ck.time);
    let result = ev.evolve(&ck.field, t0, a.t1, a.cadence, &mut [&mut cons]);
    manifest.steps = ev.steps_taken();
    // The series is kept even when the run stops early.
    if let Some(series) = &a.series {
        let rows: Vec<Vec<f64>> = cons.records.iter().map(|r| vec![r.t, r.mass, r.energy]).collect();
        write_csv(series, &["t", "mass", "energy"], &rows)?;
        record(manifest, outdir, series)?;
    }
    let u = result?;
    Checkpoint { p: ck.p, time: a.t1, field: u }.write_path(&a.out)?;
    record(manifest, outdir, &a.out)?;
    Ok(())
}

fn spectrum(a: &SpectrumArgs, seed: u64, outdir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let grid = uniform_grid(a.dim, a.n, a.box_length)?;
    manifest.grid_signature = Some(grid.signature());
    let cache = GroundStateCache::global();
    let gs = cache.get(a.c, a.p, &grid)?;
    let op = LinearizedOperator::new(&gs);
    let summary = op.ground_eigenpair(a.tol)?;
    manifest.steps = summary.iterations as u64;
    let grads = spectral::gradient(&gs.profile);
    let with = |first: &Field| {
        let mut v = vec![first.clone()];
        v.extend(grads.iter().cloned());
        v
    };
    let coercive_q = op.constrained_infimum(&with(&gs.profile), a.tol)?.value;
    let coercive_z = op.constrained_infimum(&with(&summary.z), a.tol)?.value;
    let mut sampled = f64::NAN;
    if a.samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let origin = vec![vec![0.0; a.dim]];
        let basis = with(&summary.z);
        sampled = f64::INFINITY;
        for _ in 0..a.samples {
            let mut w = random_test_field(&grid, &origin, &mut rng)?;
            project(&mut w, &basis)?;
            let q = op.quadratic_form(&w)? / w.l2_norm().powi(2);
            sampled = sampled.min(q);
        }
    }
    let mut header = vec!["c".to_string(), "p".into(), "lambda0".into(), "rayleigh_residual".into()];
    header.extend((1..=a.dim).map(|i| format!("kernel_residual_{i}")));
    header.extend(["coercivity_q".into(), "coercivity_z".into(), "sampled_min".into()]);
    let mut row = vec![a.c, a.p as f64, summary.lambda0, summary.rayleigh_residual];
    row.extend(&summary.kernel_residuals);
    row.extend([coercive_q, coercive_z, sampled]);
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(outdir.join("spectrum.csv"), &h, &[row])?;
    manifest.add_output(outdir, "spectrum.csv")?;
    Ok(())
}

/// Removes from `w` its `L²` projection on the span of `basis`.
fn project(w: &mut Field, basis: &[Field]) -> Result<()> {
    let mut ortho: Vec<Field> = Vec::new();
    for b in basis {
        let mut v = b.clone();
        for o in &ortho {
            v = v.axpy(-spectral::inner_product(&v, o)?, o)?;
        }
        let n = v.l2_norm();
        if n > 1e-12 {
            ortho.push(v.scaled(1.0 / n));
        }
    }
    for _ in 0..2 {
        for o in &ortho {
            *w = w.axpy(-spectral::inner_product(w, o)?, o)?;
        }
    }
    Ok(())
}

fn load_pair(a: &ConfigFieldArgs, manifest: &mut RunManifest) -> Result<(RunConfig, Checkpoint)> {
    let cfg = read_config(&a.config)?;
    manifest.config = cfg.source.clone();
    let ck = Checkpoint::read_path(&a.input)?;
    let grid = cfg.grid()?;
    if !ck.field.grid().same_sampling(&grid) || ck.field.grid().comoving_speed() != grid.comoving_speed() {
        return Err(ZkError::invalid(format!(
            "checkpoint grid {} differs from the configured grid {}",
            ck.field.grid().signature(),
            grid.signature()
        )));
    }
    if ck.p != cfg.p {
        return Err(ZkError::invalid(format!("checkpoint has p = {}, configuration p = {}", ck.p, cfg.p)));
    }
    manifest.grid_signature = Some(grid.signature());
    Ok((cfg, ck))
}

fn modulate(a: &ConfigFieldArgs, outdir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let (cfg, ck) = load_pair(a, manifest)?;
    let grid = ck.field.grid().clone();
    let m = Modulator::new(GroundStateCache::global(), &cfg.solitons, cfg.p, &grid, ModulationMode::for_power(cfg.p))?;
    let state = m.modulate(&ck.field, ck.time, None)?;
    manifest.steps = state.iterations as u64;
    let row = crate::construction::ModulationRow {
        t: state.t,
        xtilde: state.xtilde,
        ctilde: state.ctilde,
        residuals: state.ortho_residuals,
        condition: state.jacobian_condition,
        consistency: None,
        drift_rhs: 0.0,
    };
    let lines = modulation_lines(&[row], cfg.solitons.len(), grid.dim());
    std::fs::write(outdir.join("modulation.csv"), lines.join("\n") + "\n")?;
    manifest.add_output(outdir, "modulation.csv")?;
    Ok(())
}

fn diagnose(a: &ConfigFieldArgs, outdir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let (cfg, ck) = load_pair(a, manifest)?;
    let u = &ck.field;
    let family = match cfg.cutoff_scale {
        Some(l) => CutoffFamily::new(cfg.solitons.clone(), l)?,
        None => CutoffFamily::with_default_scale(cfg.solitons.clone())?,
    };
    let budget = localized_budget(u, &family, ck.time, cfg.p);
    let r = multi_soliton(&cfg.solitons, cfg.p, ck.time, u.grid())?;
    let v = u.sub(&r)?;
    let k = cfg.solitons.len();
    let mut header = vec!["t".to_string()];
    for prefix in ["M", "E", "Etilde"] {
        header.extend((1..=k).map(|i| format!("{prefix}_{i}")));
    }
    header.extend(["mass".into(), "energy".into(), "h1_error".into()]);
    header.extend(cfg.s_list.iter().map(|s| format!("hs_error_{s}")));
    let mut row = vec![ck.time];
    row.extend(budget.mass.iter().chain(&budget.energy).chain(&budget.etilde));
    row.extend([mass(u), energy(u, cfg.p), spectral::sobolev_norm(&v, 1.0, false)?]);
    for &s in &cfg.s_list {
        row.push(spectral::sobolev_norm(&v, s as f64, true)?);
    }
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(outdir.join("diagnose.csv"), &h, &[row])?;
    manifest.add_output(outdir, "diagnose.csv")?;
    Ok(())
}

fn construct_cmd(a: &ConstructArgs, outdir: &Path, manifest: &mut RunManifest) -> Result<()> {
    let cfg = read_config(&a.config)?;
    manifest.config = cfg.source.clone();
    let ccfg = cfg.construction()?;
    manifest.grid_signature = Some(ccfg.grid.signature());
    let ladder = construct(&ccfg, GroundStateCache::global())?;
    manifest.steps = ladder.rungs.iter().map(|r| r.steps).sum();
    for f in write_ladder(&ladder, outdir)? {
        manifest.add_output(outdir, &f)?;
    }
    for r in &ladder.reports {
        let rate = r.decay_h1.as_ref().map_or("n/a".to_string(), |f| fmt_f64(f.rate));
        info!("S_n = {}: H1 rate {rate}", r.sn);
    }
    match ladder.first_failure() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
