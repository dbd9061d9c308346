//! Command-line front end for `tollane-core`.
//!
//! [`run`] parses arguments, loads the scenario file and writes the command's
//! output; it returns the process exit code.

pub mod config;
pub mod format;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tollane_core::prelude::*;
use tollane_core::design::DEFAULT_GRID_STEPS;

use config::{Config, ConfigError};
use format::{num, write_csv};

type Result<T, E = CliError> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Solver(#[from] Error),
    #[error("{0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(Error::InvalidParameter { .. }) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_PRECONDITION,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "tollane", version, about = "Equilibria and toll design for a reserved toll lane")]
struct Cli {
    /// Worker threads for sweeps (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// Scenario file (TOML).
    config: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equilibrium set with its best and worst members.
    Equilibrium(ConfigArg),
    /// CSV of total delay over the `[sweep.toll]` grid.
    SweepToll(ConfigArg),
    /// Uniform toll minimizing the `[design]` objective.
    OptimizeToll(ConfigArg),
    /// CSV of total delay over the `[sweep.n]` occupancy grid.
    SweepN(ConfigArg),
    /// Occupancy threshold minimizing the `[design]` objective.
    OptimizeN(ConfigArg),
    /// CSV comparing the HOVL and DLA policies over `[sweep.toll]`.
    ComparePolicy(ConfigArg),
    /// Per-class tolls that select the best equilibrium.
    Differentiate(ConfigArg),
    /// Print the config with all defaults filled in.
    Resolve(ConfigArg),
}

impl Command {
    fn config(&self) -> &ConfigArg {
        match self {
            Command::Equilibrium(c)
            | Command::SweepToll(c)
            | Command::OptimizeToll(c)
            | Command::SweepN(c)
            | Command::OptimizeN(c)
            | Command::ComparePolicy(c)
            | Command::Differentiate(c)
            | Command::Resolve(c) => c,
        }
    }
}

/// Runs the CLI and returns its exit code. Diagnostics go to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = Config::from_path(&cli.command.config().config)?;
    let mut buf = Vec::new();
    with_threads(cli.threads, || dispatch(&cli.command, &cfg, &mut buf))??;
    match &cli.output {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(&buf)?;
            f.flush()?;
        }
        None => out.write_all(&buf)?,
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| io::Error::other(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<R: Send>(_threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    Ok(f())
}

fn dispatch(cmd: &Command, cfg: &Config, out: &mut Vec<u8>) -> Result<(), CliError> {
    match cmd {
        Command::Equilibrium(_) => equilibrium(cfg, out),
        Command::SweepToll(_) => sweep_toll_csv(cfg, out),
        Command::OptimizeToll(_) => optimize_toll_cmd(cfg, out),
        Command::SweepN(_) => sweep_n_csv(cfg, out),
        Command::OptimizeN(_) => optimize_n_cmd(cfg, out),
        Command::ComparePolicy(_) => compare_policy_csv(cfg, out),
        Command::Differentiate(_) => differentiate(cfg, out),
        Command::Resolve(_) => {
            out.write_all(cfg.to_toml().as_bytes())?;
            Ok(())
        }
    }
}

fn flows(f: &FlowDistribution) -> String {
    format!("hv_lo={} hv_ho={} av_lo={}", num(f.hv_lo), num(f.hv_ho), num(f.av_lo))
}

fn equilibrium(cfg: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let s = cfg.require_scenario()?;
    let r = equilibrium_report(s);
    let t = toll_thresholds(s);
    writeln!(out, "class: {}", r.class)?;
    match r.set {
        EquilibriumSet::Simplex { f1_star } => {
            writeln!(out, "set: simplex")?;
            writeln!(out, "f1_star: {}", num(f1_star))?;
        }
        EquilibriumSet::UniquePoint(_) => writeln!(out, "set: unique")?,
    }
    writeln!(out, "lower_threshold: {}", num(t.lower))?;
    writeln!(out, "upper_threshold: {}", num(t.upper))?;
    writeln!(out, "best: {}", flows(&r.best))?;
    writeln!(out, "worst: {}", flows(&r.worst))?;
    writeln!(out, "j_best: {}", num(r.j_best))?;
    writeln!(out, "j_worst: {}", num(r.j_worst))?;
    Ok(())
}

fn sweep_toll_csv(cfg: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let s = cfg.require_scenario()?;
    let c = sweep_toll(s, &cfg.toll_sweep.points())?;
    let rows = (0..c.len()).map(|i| {
        vec![
            num(c.parameters[i]),
            num(c.j_best[i]),
            num(c.j_worst[i]),
            c.classes[i].name().to_string(),
        ]
    });
    write_csv(out, &["tau", "j_best", "j_worst", "class"], rows)?;
    Ok(())
}

fn optimize_toll_cmd(cfg: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let s = cfg.require_scenario()?;
    let opt = optimize_toll(s, cfg.design.objective, cfg.design.grid_steps)?;
    writeln!(out, "objective: {}", cfg.design.objective.name())?;
    writeln!(out, "tau: {}", num(opt.argmin))?;
    writeln!(out, "j: {}", num(opt.total_delay))?;
    Ok(())
}

fn sweep_n_csv(cfg: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let cm = cfg.require_carpool()?;
    let c = sweep_threshold(cm, &cfg.base, &cfg.n_sweep.points())?;
    let rows = (0..c.len()).map(|i| vec![num(c.parameters[i]), num(c.j_best[i]), num(c.j_worst[i])]);
    write_csv(out, &["n", "j_best", "j_worst"], rows)?;
    Ok(())
}

fn optimize_n_cmd(cfg: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let cm = cfg.require_carpool()?;
    let range = match &cfg.design.n_candidates {
        Some(ns) => ThresholdRange::Candidates(ns.clone()),
        None => ThresholdRange::Interval {
            lo: cfg.n_sweep.start,
            hi: cfg.n_sweep.stop,
        },
    };
    let grid = cfg.design.grid_steps.max(3);
    let opt = optimize_threshold(cm, &cfg.base, &range, cfg.design.objective, grid)?;
    writeln!(out, "objective: {}", cfg.design.objective.name())?;
    writeln!(out, "n: {}", num(opt.argmin))?;
    writeln!(out, "j: {}", num(opt.total_delay))?;
    Ok(())
}

fn compare_policy_csv(cfg: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let s = cfg.require_scenario()?;
    let params = SegmentParams {
        delay_lane1: *s.delay_lane1(),
        delay_lane2: *s.delay_lane2(),
        demand: *s.demand(),
        occupancy: s.occupancy(),
        asymmetry: s.asymmetry(),
    };
    let cmp = compare_policies(&params, &cfg.toll_sweep.points())?;
    let rows = (0..cmp.hovl.len()).map(|i| {
        vec![
            num(cmp.hovl.parameters[i]),
            num(cmp.hovl.j_best[i]),
            num(cmp.hovl.j_worst[i]),
            num(cmp.dla.j_best[i]),
            num(cmp.dla.j_worst[i]),
        ]
    });
    write_csv(
        out,
        &["tau", "hovl_j_best", "hovl_j_worst", "dla_j_best", "dla_j_worst"],
        rows,
    )?;
    Ok(())
}

fn differentiate(cfg: &Config, out: &mut dyn Write) -> Result<(), CliError> {
    let s = cfg.require_scenario()?;
    let tau_star = match cfg.design.tau_star {
        Some(t) => t,
        None => optimize_toll(s, Objective::BestCase, DEFAULT_GRID_STEPS.max(cfg.design.grid_steps))?.argmin,
    };
    let vt = differentiate_tolls(s, tau_star, cfg.design.delta)?;
    let uniform = equilibrium_report(&s.with_toll(tau_star)?);
    writeln!(out, "tau_star: {}", num(tau_star))?;
    writeln!(out, "delta: {}", num(cfg.design.delta))?;
    writeln!(out, "toll_hv_lo: {}", num(vt.hv_lo))?;
    writeln!(out, "toll_hv_ho: {}", num(vt.hv_ho))?;
    writeln!(out, "toll_av_lo: {}", num(vt.av_lo))?;
    writeln!(out, "uniform_j_best: {}", num(uniform.j_best))?;
    writeln!(out, "uniform_j_worst: {}", num(uniform.j_worst))?;
    match verify_vector_toll(s, &vt)? {
        VectorTollEquilibrium::Unique { flows: f, total_delay, .. } => {
            writeln!(out, "verified: unique")?;
            writeln!(out, "flows: {}", flows(&f))?;
            writeln!(out, "j: {}", num(total_delay))?;
        }
        VectorTollEquilibrium::NonUnique { tied, .. } => {
            let names: Vec<&str> = tied.iter().map(|c| c.name()).collect();
            writeln!(out, "verified: non_unique ({})", names.join(", "))?;
        }
    }
    Ok(())
}
