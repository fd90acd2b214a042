//! JSON run configuration.
//!
//! ```json
//! {
//!   "problem": {
//!     "dimension": 1,
//!     "dynamics": { "name": "quadratic_xdep" },
//!     "terminal_cost": { "name": "sin_pi" },
//!     "lagrangian": { "kind": "quadratic", "weight": 1.0 },
//!     "epsilon": 0.0
//!   },
//!   "grid": { "n_x": 160, "n_t": 41, "horizon": 1.0 },
//!   "pdhg": { "max_outer": 20000 }
//! }
//! ```
//!
//! `problem.domain` lists `{ "lower", "upper", "boundary" }` per axis and
//! defaults to the catalog domain of the named dynamics.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid, SpatialAxis};
use crate::pdhg::PdhgConfig;
use crate::problem::{AffineDynamics, AxisDynamics, ControlProblem, Lagrangian, TerminalCost};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub pdhg: PdhgConfig,
    /// Output directory; the command line `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<AxisSpec>>,
    pub dynamics: DynamicsSpec,
    pub terminal_cost: TerminalCost,
    pub lagrangian: Lagrangian,
    #[serde(default)]
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lower: f64,
    pub upper: f64,
    pub boundary: Boundary,
}

/// Catalog dynamics or explicit per-axis coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsSpec {
    /// `f_d = -((x_d - 1)^2 + 0.1) alpha_d` on periodic `[0, 2]`.
    QuadraticXdep,
    /// `f = [alpha, x_1]` on Neumann `[-2, 2]` x periodic `[-1, 1]`.
    Newton,
    Custom {
        axes: Vec<AxisDynamics>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_x: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_y: Option<usize>,
    pub n_t: usize,
    #[serde(alias = "T")]
    pub horizon: f64,
}

fn config_error(path: &str, reason: impl ToString) -> Error {
    Error::Config {
        path: path.to_string(),
        reason: reason.to_string(),
    }
}

impl DynamicsSpec {
    fn default_domain(&self, dims: usize) -> Option<Vec<AxisSpec>> {
        let periodic = |lower, upper| AxisSpec {
            lower,
            upper,
            boundary: Boundary::Periodic,
        };
        match self {
            DynamicsSpec::QuadraticXdep => Some(vec![periodic(0.0, 2.0); dims]),
            DynamicsSpec::Newton => Some(vec![
                AxisSpec {
                    lower: -2.0,
                    upper: 2.0,
                    boundary: Boundary::Neumann,
                },
                periodic(-1.0, 1.0),
            ]),
            DynamicsSpec::Custom { .. } => None,
        }
    }

    fn build(&self, dims: usize) -> Result<AffineDynamics> {
        match self {
            DynamicsSpec::QuadraticXdep => Ok(AffineDynamics::quadratic_xdep(dims)),
            DynamicsSpec::Newton if dims == 2 => Ok(AffineDynamics::newton()),
            DynamicsSpec::Newton => Err(config_error(
                "problem.dynamics",
                "newton dynamics need dimension 2",
            )),
            DynamicsSpec::Custom { axes } => Ok(AffineDynamics { axes: axes.clone() }),
        }
    }
}

impl RunConfig {
    /// Parses and validates JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(&path, e.into_inner())
        })?;
        config.build_problem()?;
        Ok(config)
    }

    pub fn build_grid(&self) -> Result<Grid> {
        let p = &self.problem;
        let dims = p.dimension;
        if !(1..=2).contains(&dims) {
            return Err(config_error(
                "problem.dimension",
                format!("{dims} is not 1 or 2"),
            ));
        }
        let domain = match &p.domain {
            Some(d) => d.clone(),
            None => p
                .dynamics
                .default_domain(dims)
                .ok_or_else(|| config_error("problem.domain", "required for custom dynamics"))?,
        };
        if domain.len() != dims {
            return Err(config_error(
                "problem.domain",
                format!("{} axes given for dimension {dims}", domain.len()),
            ));
        }
        let g = &self.grid;
        let counts = match (dims, g.n_y) {
            (1, None) => vec![g.n_x],
            (2, Some(n_y)) => vec![g.n_x, n_y],
            (1, Some(_)) => return Err(config_error("grid.n_y", "not used in dimension 1")),
            _ => return Err(config_error("grid.n_y", "required in dimension 2")),
        };
        let axes = domain
            .iter()
            .zip(counts)
            .map(|(a, n)| SpatialAxis::new(a.lower, a.upper, n, a.boundary))
            .collect();
        if !(g.horizon.is_finite() && g.horizon > 0.0) {
            return Err(config_error("grid.horizon", "must be positive"));
        }
        Grid::new(axes, g.n_t, g.horizon).map_err(|e| config_error("grid", e))
    }

    pub fn build_problem(&self) -> Result<ControlProblem> {
        let grid = self.build_grid()?;
        let p = &self.problem;
        let dynamics = p.dynamics.build(p.dimension)?;
        let problem = ControlProblem::new(
            grid,
            dynamics,
            p.lagrangian,
            p.terminal_cost.clone(),
            p.epsilon,
        )
        .map_err(|e| config_error("problem", e))?;
        self.pdhg.validate().map_err(|e| config_error("pdhg", e))?;
        Ok(problem)
    }
}

/// Reads and validates a JSON configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json(&text)
}
