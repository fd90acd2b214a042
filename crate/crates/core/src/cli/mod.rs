//! Command-line front end: `solve`, `trajectories`, `check` and `compare`.
//!
//! Exit status is 0 on success, 2 when a run finished without meeting its
//! target (no convergence, failed checks) and 1 on errors.

pub mod config;
pub mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{parse_config, RunConfig};

use crate::error::{Error, Result};
use crate::oracle::{compare, explicit_solve, ComparisonReport};
use crate::pdhg::{solve_windowed, Residuals};
use crate::problem::{check_consistency, check_monotonicity};
use crate::trajectory::{default_steps, integrate_ode, integrate_sde};

/// Caps the worker count of the global thread pool; 0 or unset means auto.
pub const THREADS_VAR: &str = "HJPDHG_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "hjpdhg",
    version,
    about = "Primal-dual solver for optimal control and Hamilton-Jacobi equations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the saddle-point problem and write fields plus metadata.json.
    Solve(SolveArgs),
    /// Integrate optimal trajectories from a solved output directory.
    Trajectories(TrajectoryArgs),
    /// Sample the numerical Hamiltonian for consistency and monotonicity.
    Check(CheckArgs),
    /// Solve and compare against the explicit reference scheme.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub windows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[arg(long)]
    pub solution: PathBuf,
    /// Initial state, comma separated; repeat for several trajectories.
    #[arg(long = "x0", required = true)]
    pub x0: Vec<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seed of the first trajectory; the n-th uses `seed + n`. Only used for
    /// viscous problems.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    /// Output directory; defaults to the solution directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub cfl: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Result of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NotConverged,
}

impl Outcome {
    pub fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::NotConverged => 2,
        }
    }
}

fn summary(r: &Residuals) -> String {
    format!(
        "hj {:.3e} prox {:.3e} continuity {:.3e}",
        r.hj, r.prox, r.continuity
    )
}

fn output_dir(flag: Option<&Path>, config: &RunConfig) -> Result<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output.clone())
        .ok_or_else(|| Error::arg("out", "no output directory given"))
}

fn run_solve(args: &SolveArgs) -> Result<Outcome> {
    let mut config = parse_config(&args.config)?;
    if let Some(w) = args.windows {
        config.pdhg.windows = w;
    }
    let out = output_dir(args.out.as_deref(), &config)?;
    let problem = config.build_problem()?;
    let (state, report) = solve_windowed(&problem, &config.pdhg)?;
    io::write_state(&out, &state)?;
    io::write_json(
        &out.join(io::METADATA),
        &io::Metadata::new(&config, problem.grid(), &report),
    )?;
    println!(
        "solve: {} iterations, converged {}, {}",
        report.outer_iterations,
        report.converged,
        summary(&report.final_residuals())
    );
    Ok(if report.converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

fn parse_point(text: &str, dims: usize) -> Result<[f64; 2]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != dims {
        return Err(Error::arg(
            "x0",
            format!("{text:?} has {} component(s), expected {dims}", parts.len()),
        ));
    }
    let mut x = [0.0; 2];
    for (slot, p) in x.iter_mut().zip(&parts) {
        *slot = p
            .parse()
            .map_err(|_| Error::arg("x0", format!("{p:?} is not a number")))?;
    }
    Ok(x)
}

fn run_trajectories(args: &TrajectoryArgs) -> Result<Outcome> {
    let dir = &args.solution;
    if !dir.is_dir() {
        return Err(Error::SolutionNotFound(dir.clone()));
    }
    let meta = io::read_metadata(dir)?;
    let problem = meta.config.build_problem()?;
    let state = io::read_state(dir, &problem)?;
    let dims = problem.dims();
    let starts = args
        .x0
        .iter()
        .map(|s| parse_point(s, dims))
        .collect::<Result<Vec<_>>>()?;
    let steps = args.steps.unwrap_or_else(|| default_steps(problem.grid()));
    let out = args.out.clone().unwrap_or_else(|| dir.clone());
    std::fs::create_dir_all(&out)?;

    let paths = starts
        .par_iter()
        .enumerate()
        .map(|(n, &x0)| match (problem.is_viscous(), args.seed) {
            (true, Some(seed)) => integrate_sde(
                &state,
                &problem,
                x0,
                args.t0,
                steps,
                seed.wrapping_add(n as u64),
            ),
            (true, None) => Err(Error::arg("seed", "required for viscous problems")),
            _ => integrate_ode(&state, &problem, x0, args.t0, steps),
        })
        .collect::<Result<Vec<_>>>()?;
    for (n, p) in paths.iter().enumerate() {
        io::write_trajectory(&io::trajectory_file(&out, n), p)?;
    }
    println!("trajectories: {} written, {steps} steps each", paths.len());
    Ok(Outcome::Success)
}

fn run_check(args: &CheckArgs) -> Result<Outcome> {
    let config = parse_config(&args.config)?;
    let problem = config.build_problem()?;
    let c = check_consistency(&problem, args.samples)?;
    let m = check_monotonicity(&problem, args.samples)?;
    println!(
        "check: max_deviation {:.3e}, monotonicity violations {} of {} probes",
        c.max_deviation, m.violations, m.probes
    );
    Ok(if c.max_deviation <= 1e-9 && m.violations == 0 {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

#[derive(Serialize)]
struct CompareSummary {
    cfl: f64,
    converged: bool,
    outer_iterations: usize,
    comparison: ComparisonReport,
}

fn run_compare(args: &CompareArgs) -> Result<Outcome> {
    let config = parse_config(&args.config)?;
    let problem = config.build_problem()?;
    let reference = explicit_solve(&problem, args.cfl)?;
    let (state, report) = solve_windowed(&problem, &config.pdhg)?;
    let cmp = compare(&state.phi, &reference)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_field(&args.out.join("phi.csv"), &state.phi)?;
    io::write_field(&args.out.join("explicit.csv"), &reference)?;
    io::write_json(
        &args.out.join(io::METADATA),
        &io::Metadata::new(&config, problem.grid(), &report),
    )?;
    io::write_json(
        &args.out.join("comparison.json"),
        &CompareSummary {
            cfl: args.cfl,
            converged: report.converged,
            outer_iterations: report.outer_iterations,
            comparison: cmp,
        },
    )?;
    println!(
        "compare: {} iterations, converged {}, l_inf {:.3e}, l2 {:.3e}, worst slice {}",
        report.outer_iterations, report.converged, cmp.l_inf, cmp.l2, cmp.worst_slice
    );
    Ok(if report.converged {
        Outcome::Success
    } else {
        Outcome::NotConverged
    })
}

/// Runs one parsed command.
pub fn run(command: &Command) -> Result<Outcome> {
    match command {
        Command::Solve(a) => run_solve(a),
        Command::Trajectories(a) => run_trajectories(a),
        Command::Check(a) => run_check(a),
        Command::Compare(a) => run_compare(a),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(text) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .map_err(|_| Error::arg("HJPDHG_THREADS", format!("{text:?} is not a count")))?;
    if n > 0 {
        // a pool configured earlier in the process wins
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

/// Entry point of the binary.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match configure_threads().and_then(|_| run(&cli.command)) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
