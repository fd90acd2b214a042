use std::time::Instant;

use super::engine::{terminal_slice, Pdhg};
use super::{solve, step_sizes, AlphaPair, PdhgConfig, SolveReport, SolverState};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::problem::ControlProblem;

/// Solves `config.windows` consecutive time segments, each seeded with the
/// last slice of the previous one, and stitches the results together.
pub fn solve_windowed(
    problem: &ControlProblem,
    config: &PdhgConfig,
) -> Result<(SolverState, SolveReport)> {
    config.validate()?;
    let windows = config.windows;
    if windows == 1 {
        return solve(problem, config);
    }
    let start = Instant::now();
    let grid = problem.grid();
    let intervals = grid.n_t() - 1;
    if !intervals.is_multiple_of(windows) {
        return Err(Error::arg(
            "windows",
            format!("{windows} does not divide the {intervals} time intervals"),
        ));
    }
    let m = intervals / windows;
    if m < 2 {
        return Err(Error::arg(
            "windows",
            format!("{windows} windows leave fewer than 3 time points per window"),
        ));
    }

    let steps = step_sizes(problem, config);
    let sl = grid.slice_len();
    let mut phi = Field::zeros(grid);
    let mut phi_tilde = Field::zeros(grid);
    let mut rho = Field::constant(grid, config.c);
    let mut alpha: Vec<Option<AlphaPair>> = (0..grid.dims())
        .map(|d| {
            problem.control_dependent(d).then(|| AlphaPair {
                up: Field::zeros(grid),
                down: Field::zeros(grid),
            })
        })
        .collect();

    let mut initial = terminal_slice(problem);
    phi.as_slice_mut()[..sl].copy_from_slice(&initial);
    phi_tilde.as_slice_mut()[..sl].copy_from_slice(&initial);

    let mut history = Vec::new();
    let mut converged = true;
    for w in 0..windows {
        let k0 = w * m;
        let engine = Pdhg::for_window(problem, config, steps, k0, m + 1, initial)?;
        let mut local = engine.init_state();
        let report = engine.run(&mut local);
        converged &= report.converged;
        history.extend(report.residual_history);

        // rows 1..=m of the window map to global rows k0+1..=k0+m
        let dst = (k0 + 1) * sl..(k0 + m + 1) * sl;
        let src = sl..(m + 1) * sl;
        phi.as_slice_mut()[dst.clone()].copy_from_slice(&local.phi.as_slice()[src.clone()]);
        phi_tilde.as_slice_mut()[dst.clone()]
            .copy_from_slice(&local.phi_tilde.as_slice()[src.clone()]);
        rho.as_slice_mut()[dst.clone()].copy_from_slice(&local.rho.as_slice()[src.clone()]);
        for (g, l) in alpha.iter_mut().zip(&local.alpha) {
            if let (Some(g), Some(l)) = (g.as_mut(), l.as_ref()) {
                g.up.as_slice_mut()[dst.clone()].copy_from_slice(&l.up.as_slice()[src.clone()]);
                g.down.as_slice_mut()[dst.clone()].copy_from_slice(&l.down.as_slice()[src.clone()]);
            }
        }
        initial = local.phi.as_slice()[m * sl..].to_vec();
    }

    Ok((
        SolverState {
            phi,
            phi_tilde,
            rho,
            alpha,
        },
        SolveReport {
            outer_iterations: history.len(),
            residual_history: history,
            converged,
            wall_time: start.elapsed().as_secs_f64(),
            steps,
        },
    ))
}
