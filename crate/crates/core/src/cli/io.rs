//! CSV and JSON output of solver results.
//!
//! Values are written with 17 significant digits so that reading a file back
//! reproduces every `f64` exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::pdhg::{AlphaPair, Residuals, SolveReport, SolverState, StepSizes};
use crate::problem::{Branch, ControlProblem};
use crate::trajectory::TrajectoryResult;

pub const METADATA: &str = "metadata.json";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn malformed(path: &Path, reason: impl ToString) -> Error {
    Error::MalformedData {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => malformed(path, format!("{other:?}")),
    }
}

/// Writes `field` as rows `k,i[,j],value`.
pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    let grid = field.grid();
    let two_d = grid.dims() == 2;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: &[&str] = if two_d {
        &["k", "i", "j", "value"]
    } else {
        &["k", "i", "value"]
    };
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for ((k, i, j), v) in field.values().indexed_iter() {
        let row = if two_d {
            vec![k.to_string(), i.to_string(), j.to_string(), fmt(*v)]
        } else {
            vec![k.to_string(), i.to_string(), fmt(*v)]
        };
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_field`] onto `grid`. Every node must
/// appear exactly once.
pub fn read_field(path: &Path, grid: &Grid) -> Result<Field> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let two_d = grid.dims() == 2;
    let width = if two_d { 4 } else { 3 };
    let (nt, nx, ny) = grid.shape();
    let mut field = Field::zeros(grid);
    let mut seen = vec![false; grid.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != width {
            return Err(malformed(path, format!("expected {width} columns")));
        }
        let index = |c: usize| -> Result<usize> {
            rec[c]
                .trim()
                .parse()
                .map_err(|_| malformed(path, format!("bad index {:?}", &rec[c])))
        };
        let k = index(0)?;
        let i = index(1)?;
        let j = if two_d { index(2)? } else { 0 };
        let v: f64 = rec[width - 1]
            .trim()
            .parse()
            .map_err(|_| malformed(path, format!("bad value {:?}", &rec[width - 1])))?;
        if k >= nt || i >= nx || j >= ny {
            return Err(malformed(
                path,
                format!("index ({k}, {i}, {j}) out of range"),
            ));
        }
        let flat = (k * nx + i) * ny + j;
        if std::mem::replace(&mut seen[flat], true) {
            return Err(malformed(path, format!("duplicate node ({k}, {i}, {j})")));
        }
        field.values_mut()[[k, i, j]] = v;
    }
    if seen.iter().any(|s| !s) {
        return Err(malformed(path, "missing nodes"));
    }
    Ok(field)
}

/// File name of one control slot: `alpha_<d><b>.csv` with the dimension
/// `d` counted from 1 and `b = 1` for the up slot, `2` for the down slot.
/// One-dimensional problems drop the dimension: `alpha_1.csv`, `alpha_2.csv`.
pub fn alpha_file(dims: usize, d: usize, branch: Branch) -> String {
    let b = match branch {
        Branch::Up => 1,
        Branch::Down => 2,
    };
    if dims == 1 {
        format!("alpha_{b}.csv")
    } else {
        format!("alpha_{}{b}.csv", d + 1)
    }
}

/// Writes `phi.csv`, `rho.csv` and one file per control slot.
pub fn write_state(dir: &Path, state: &SolverState) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_field(&dir.join("phi.csv"), &state.phi)?;
    write_field(&dir.join("rho.csv"), &state.rho)?;
    let dims = state.grid().dims();
    for (d, slot) in state.alpha.iter().enumerate() {
        if let Some(pair) = slot {
            for b in Branch::BOTH {
                write_field(&dir.join(alpha_file(dims, d, b)), pair.branch(b))?;
            }
        }
    }
    Ok(())
}

/// Reads a state written by [`write_state`]; `phi_tilde` is set to `phi`.
pub fn read_state(dir: &Path, problem: &ControlProblem) -> Result<SolverState> {
    let grid = problem.grid();
    let phi = read_field(&dir.join("phi.csv"), grid)?;
    let rho = read_field(&dir.join("rho.csv"), grid)?;
    let dims = grid.dims();
    let mut alpha = Vec::with_capacity(dims);
    for d in 0..dims {
        alpha.push(if problem.control_dependent(d) {
            Some(AlphaPair {
                up: read_field(&dir.join(alpha_file(dims, d, Branch::Up)), grid)?,
                down: read_field(&dir.join(alpha_file(dims, d, Branch::Down)), grid)?,
            })
        } else {
            None
        });
    }
    Ok(SolverState {
        phi_tilde: phi.clone(),
        phi,
        rho,
        alpha,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub shape: [usize; 3],
    pub dx: Vec<f64>,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub config: RunConfig,
    pub grid: GridSummary,
    pub steps: StepSizes,
    pub outer_iterations: usize,
    pub converged: bool,
    pub wall_time: f64,
    pub final_residuals: Residuals,
    pub residual_history: Vec<Residuals>,
}

impl Metadata {
    pub fn new(config: &RunConfig, grid: &Grid, report: &SolveReport) -> Self {
        let (nt, nx, ny) = grid.shape();
        Metadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            grid: GridSummary {
                shape: [nt, nx, ny],
                dx: (0..grid.dims()).map(|d| grid.dx(d)).collect(),
                dt: grid.dt(),
            },
            steps: report.steps,
            outer_iterations: report.outer_iterations,
            converged: report.converged,
            wall_time: report.wall_time,
            final_residuals: report.final_residuals(),
            residual_history: report.residual_history.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn read_metadata(dir: &Path) -> Result<Metadata> {
    let path = dir.join(METADATA);
    if !path.is_file() {
        return Err(Error::SolutionNotFound(dir.to_path_buf()));
    }
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| malformed(&path, e))
}

/// `traj_<n>.csv` with rows `s,gamma_1[,gamma_2],alpha_1[,alpha_2]`.
pub fn trajectory_file(dir: &Path, n: usize) -> PathBuf {
    dir.join(format!("traj_{n}.csv"))
}

pub fn write_trajectory(path: &Path, traj: &TrajectoryResult) -> Result<()> {
    let dims = traj.dims;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["s".to_string()];
    header.extend((1..=dims).map(|d| format!("gamma_{d}")));
    header.extend((1..=dims).map(|d| format!("alpha_{d}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for ((s, x), a) in traj.times.iter().zip(&traj.states).zip(&traj.controls) {
        let mut row = vec![fmt(*s)];
        row.extend(x[..dims].iter().map(|v| fmt(*v)));
        row.extend(a[..dims].iter().map(|v| fmt(*v)));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush()?;
    Ok(())
}
