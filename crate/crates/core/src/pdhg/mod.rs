//! Preconditioned primal-dual hybrid gradient iteration for the discrete
//! saddle-point problem
//!
//! ```text
//! min_phi max_{rho >= 0, alpha}  sum_{k>=1} rho_k ( D_t^- phi - v(alpha) . D phi - L^(alpha)
//!                                                   - eps Lap phi )
//!                                - (c / dt) sum phi_{last}
//! ```
//!
//! with `phi` pinned to the terminal cost on the first time slice.

mod engine;
mod window;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use engine::Pdhg;
pub use window::solve_windowed;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::problem::{Branch, ControlProblem};

/// Solver parameters. Step sizes left unset are derived from
/// [`estimate_stepsize_bound`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdhgConfig {
    pub tau_rho: Option<f64>,
    pub tau_alpha: Option<f64>,
    pub tau_phi: Option<f64>,
    /// Terminal value of the multiplier.
    pub c: f64,
    pub n_inner: usize,
    pub max_outer: usize,
    pub tol: f64,
    pub windows: usize,
    pub rho_floor: f64,
}

impl Default for PdhgConfig {
    fn default() -> Self {
        PdhgConfig {
            tau_rho: None,
            tau_alpha: None,
            tau_phi: None,
            c: 1.0,
            n_inner: 10,
            max_outer: 20_000,
            tol: 1e-6,
            windows: 1,
            rho_floor: 1e-6,
        }
    }
}

impl PdhgConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau_rho", self.tau_rho),
            ("tau_alpha", self.tau_alpha),
            ("tau_phi", self.tau_phi),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::arg(name, format!("{v} is not positive")));
                }
            }
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::arg("c", format!("{} is not positive", self.c)));
        }
        if self.n_inner == 0 {
            return Err(Error::arg("n_inner", "must be at least 1"));
        }
        if self.max_outer == 0 {
            return Err(Error::arg("max_outer", "must be at least 1"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::arg("tol", format!("{} is not positive", self.tol)));
        }
        if self.windows == 0 {
            return Err(Error::arg("windows", "must be at least 1"));
        }
        if !(self.rho_floor.is_finite() && self.rho_floor > 0.0) {
            return Err(Error::arg("rho_floor", "must be positive"));
        }
        Ok(())
    }
}

/// Step sizes actually used by a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub tau_rho: f64,
    pub tau_alpha: f64,
    pub tau_phi: f64,
    /// Operator bound the defaults were derived from.
    pub bound: f64,
    /// Factor applied to the defaults for viscous problems (1 otherwise).
    pub derating: f64,
}

/// Sup-norm optimality residuals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub hj: f64,
    pub prox: f64,
    pub continuity: f64,
}

impl Residuals {
    /// Largest of the three; NaN if any of them is NaN.
    pub fn max(&self) -> f64 {
        [self.hj, self.prox, self.continuity]
            .into_iter()
            .fold(0.0, |m, v| {
                if v.is_nan() || m.is_nan() {
                    f64::NAN
                } else {
                    m.max(v)
                }
            })
    }
}

/// Control slots of one control-dependent dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaPair {
    pub up: Field,
    pub down: Field,
}

impl AlphaPair {
    pub fn branch(&self, b: Branch) -> &Field {
        match b {
            Branch::Up => &self.up,
            Branch::Down => &self.down,
        }
    }

    /// `up + down`, the feedback control on the grid.
    pub fn combined(&self) -> Field {
        let mut out = self.up.clone();
        for (o, d) in out.as_slice_mut().iter_mut().zip(self.down.as_slice()) {
            *o += d;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub phi: Field,
    pub phi_tilde: Field,
    pub rho: Field,
    /// Indexed by spatial dimension; `None` for drift-only dimensions.
    pub alpha: Vec<Option<AlphaPair>>,
}

impl SolverState {
    pub fn grid(&self) -> &Grid {
        self.phi.grid()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub outer_iterations: usize,
    pub residual_history: Vec<Residuals>,
    pub converged: bool,
    pub wall_time: f64,
    pub steps: StepSizes,
}

impl SolveReport {
    pub fn final_residuals(&self) -> Residuals {
        self.residual_history.last().copied().unwrap_or_default()
    }
}

/// `max{1, sup|b|}^2 + sup|a|^2` sampled over the grid nodes and times.
pub fn estimate_stepsize_bound(problem: &ControlProblem) -> f64 {
    let grid = problem.grid();
    let (nt, nx, ny) = grid.shape();
    let mut sup_a = 0.0f64;
    let mut sup_b = 0.0f64;
    for k in 0..nt {
        let t = grid.time(k);
        for i in 0..nx {
            for j in 0..ny {
                let x = grid.point(i, j);
                for d in 0..problem.dims() {
                    let (a, b) = problem.coefficients(d, x, t);
                    sup_a = sup_a.max(a.abs());
                    sup_b = sup_b.max(b.abs());
                }
            }
        }
    }
    sup_b.max(1.0).powi(2) + sup_a * sup_a
}

const DUAL_STEP: f64 = 0.2;
const PRIMAL_STEP: f64 = 2.0;

/// Resolves the step sizes for `problem` under `config`.
pub fn step_sizes(problem: &ControlProblem, config: &PdhgConfig) -> StepSizes {
    let bound = estimate_stepsize_bound(problem);
    let grid = problem.grid();
    let derating = if problem.is_viscous() {
        let dx_min = grid
            .axes()
            .iter()
            .map(|a| a.spacing())
            .fold(f64::INFINITY, f64::min);
        let denom = 4.0 * problem.epsilon() * grid.dt() * grid.dims() as f64;
        (dx_min * dx_min / denom).min(1.0)
    } else {
        1.0
    };
    // Dual steps a tenth of the primal one; the product stays at 0.4 / B^2.
    let dual = DUAL_STEP / bound * derating;
    let primal = PRIMAL_STEP / bound * derating;
    StepSizes {
        tau_rho: config.tau_rho.unwrap_or(dual),
        tau_alpha: config.tau_alpha.unwrap_or(dual),
        tau_phi: config.tau_phi.unwrap_or(primal),
        bound,
        derating,
    }
}

/// `phi = g` on every slice, `rho = c`, all controls zero.
pub fn init_state(problem: &ControlProblem, config: &PdhgConfig) -> Result<SolverState> {
    config.validate()?;
    Ok(Pdhg::new(problem, config)?.init_state())
}

/// Runs the iteration until the largest residual drops to `config.tol` or
/// `config.max_outer` outer steps have been taken.
pub fn solve(problem: &ControlProblem, config: &PdhgConfig) -> Result<(SolverState, SolveReport)> {
    let start = Instant::now();
    let engine = Pdhg::new(problem, config)?;
    let mut state = engine.init_state();
    let mut report = engine.run(&mut state);
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((state, report))
}

/// Optimality residuals of `state` for `problem` with terminal constant `c`.
pub fn optimality_residuals(
    state: &SolverState,
    problem: &ControlProblem,
    config: &PdhgConfig,
) -> Result<Residuals> {
    let engine = Pdhg::new(problem, config)?;
    engine.check_state(state)?;
    Ok(engine.residuals(state))
}

/// `(|rho_last - c|_inf, bound)` where the bound follows from the last row of
/// the continuity residual: `dt * (continuity + sup |divergence|)`.
pub fn terminal_multiplier_gap(
    state: &SolverState,
    problem: &ControlProblem,
    config: &PdhgConfig,
) -> Result<(f64, f64)> {
    let engine = Pdhg::new(problem, config)?;
    engine.check_state(state)?;
    Ok(engine.terminal_gap(state))
}
