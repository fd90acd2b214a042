//! Feedback controls read off a solved state, and forward integration of the
//! controlled dynamics (Euler for the ODE, Euler-Maruyama for the SDE).
//!
//! The solver works in reversed time `t = T - s`; everything here takes the
//! physical time `s` and does the flip internally.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid, SpatialAxis};
use crate::pdhg::SolverState;
use crate::problem::ControlProblem;

/// Sampled path of one trajectory. `times`, `states` and `controls` have the
/// same length; `controls[j]` is the feedback applied at `states[j]` (the last
/// entry is the feedback at the end point, never applied).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryResult {
    pub dims: usize,
    pub times: Vec<f64>,
    pub states: Vec<[f64; 2]>,
    /// Zero in drift-only dimensions.
    pub controls: Vec<[f64; 2]>,
    /// `None` for deterministic paths.
    pub seed: Option<u64>,
}

impl TrajectoryResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> [f64; 2] {
        *self
            .states
            .last()
            .expect("trajectory has at least one state")
    }
}

/// Trajectory step count used when the caller gives none.
pub fn default_steps(grid: &Grid) -> usize {
    10 * (grid.n_t() - 1)
}

/// Lower node and weight of the upper node for linear interpolation.
fn bracket(ax: &SpatialAxis, x: f64) -> (usize, usize, f64) {
    let n = ax.points;
    let u = (ax.fold(x) - ax.lower) / ax.spacing();
    match ax.boundary {
        Boundary::Periodic => {
            let i = (u.floor() as usize).min(n - 1);
            (i, (i + 1) % n, u - i as f64)
        }
        Boundary::Neumann => {
            let i = (u.floor() as usize).min(n - 2);
            (i, i + 1, (u - i as f64).clamp(0.0, 1.0))
        }
    }
}

/// Weighted flat indices of the (up to four) nodes surrounding `x` in one
/// time slice.
fn spatial_stencil(grid: &Grid, x: [f64; 2]) -> Vec<(usize, f64)> {
    let ny = grid.shape().2;
    let (i0, i1, wx) = bracket(&grid.axes()[0], x[0]);
    let ys = if grid.dims() == 2 {
        let (j0, j1, wy) = bracket(&grid.axes()[1], x[1]);
        vec![(j0, 1.0 - wy), (j1, wy)]
    } else {
        vec![(0, 1.0)]
    };
    let mut out = Vec::with_capacity(4);
    for (i, wi) in [(i0, 1.0 - wx), (i1, wx)] {
        for &(j, wj) in &ys {
            out.push((i * ny + j, wi * wj));
        }
    }
    out
}

fn check_state(state: &SolverState, problem: &ControlProblem) -> Result<()> {
    state.phi.check_grid(problem.grid())?;
    if state.alpha.len() != problem.dims() {
        return Err(Error::arg(
            "state",
            "control slots do not match the dimension",
        ));
    }
    Ok(())
}

fn check_time(grid: &Grid, s: f64) -> Result<()> {
    let slack = 1e-12 * grid.horizon();
    if !(s >= -slack && s <= grid.horizon() + slack) {
        return Err(Error::arg(
            "s",
            format!("{s} lies outside [0, {}]", grid.horizon()),
        ));
    }
    Ok(())
}

fn interpolate(state: &SolverState, x: [f64; 2], s: f64) -> [f64; 2] {
    let grid = state.grid();
    let sl = grid.slice_len();
    let t = (grid.horizon() - s).clamp(0.0, grid.horizon());
    let pos = t / grid.dt();
    let k0 = (pos.floor() as usize).min(grid.n_t() - 2);
    let wt = (pos - k0 as f64).clamp(0.0, 1.0);
    let nodes = spatial_stencil(grid, x);

    let mut out = [0.0; 2];
    for (d, slot) in state.alpha.iter().enumerate() {
        let Some(pair) = slot else { continue };
        let (up, down) = (pair.up.as_slice(), pair.down.as_slice());
        let mut v = 0.0;
        for (k, wk) in [(k0, 1.0 - wt), (k0 + 1, wt)] {
            if wk == 0.0 {
                continue;
            }
            for &(n, w) in &nodes {
                let m = k * sl + n;
                v += wk * w * (up[m] + down[m]);
            }
        }
        out[d] = v;
    }
    out
}

/// Feedback control at state `x` and physical time `s`: the combined control
/// slots interpolated multilinearly in space and linearly in time at
/// `t = T - s`.
pub fn feedback_control(
    state: &SolverState,
    problem: &ControlProblem,
    x: [f64; 2],
    s: f64,
) -> Result<[f64; 2]> {
    check_state(state, problem)?;
    check_time(problem.grid(), s)?;
    Ok(interpolate(state, x, s))
}

fn fold_point(grid: &Grid, mut x: [f64; 2]) -> [f64; 2] {
    for (d, ax) in grid.axes().iter().enumerate() {
        x[d] = ax.fold(x[d]);
    }
    x
}

fn integrate(
    state: &SolverState,
    problem: &ControlProblem,
    x0: [f64; 2],
    t0: f64,
    n_steps: usize,
    mut noise: Option<&mut dyn FnMut() -> f64>,
) -> Result<TrajectoryResult> {
    check_state(state, problem)?;
    let grid = problem.grid();
    check_time(grid, t0)?;
    if n_steps == 0 {
        return Err(Error::arg("n_steps", "must be at least 1"));
    }
    let dims = problem.dims();
    if x0[..dims].iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("x0", "must be finite"));
    }
    let h = (grid.horizon() - t0) / n_steps as f64;
    let kick = (2.0 * problem.epsilon() * h).sqrt();
    let dynamics = problem.dynamics();

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut controls = Vec::with_capacity(n_steps + 1);
    let mut x = x0;
    for j in 0..=n_steps {
        let s = if j == n_steps {
            grid.horizon()
        } else {
            t0 + j as f64 * h
        };
        let alpha = interpolate(state, x, s);
        times.push(s);
        states.push(x);
        controls.push(alpha);
        if j == n_steps {
            break;
        }
        let v = dynamics.velocity(x, s, alpha);
        let mut next = x;
        for d in 0..dims {
            next[d] += h * v[d];
        }
        if let Some(draw) = noise.as_mut() {
            for slot in next.iter_mut().take(dims) {
                *slot += kick * draw();
            }
        }
        x = fold_point(grid, next);
    }
    Ok(TrajectoryResult {
        dims,
        times,
        states,
        controls,
        seed: None,
    })
}

/// Forward Euler on `dx/ds = f(x, s, alpha(x, s))` from `x0` at `t0` to `T`.
pub fn integrate_ode(
    state: &SolverState,
    problem: &ControlProblem,
    x0: [f64; 2],
    t0: f64,
    n_steps: usize,
) -> Result<TrajectoryResult> {
    integrate(state, problem, x0, t0, n_steps, None)
}

/// Euler-Maruyama with `sqrt(2 eps h)` Gaussian kicks drawn from a ChaCha
/// generator seeded with `seed`. With `eps = 0` no draws are made and the path
/// equals [`integrate_ode`].
pub fn integrate_sde(
    state: &SolverState,
    problem: &ControlProblem,
    x0: [f64; 2],
    t0: f64,
    n_steps: usize,
    seed: u64,
) -> Result<TrajectoryResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || StandardNormal.sample(&mut rng);
    let mut out = integrate_sde_with(state, problem, x0, t0, n_steps, &mut draw)?;
    out.seed = Some(seed);
    Ok(out)
}

/// As [`integrate_sde`] with standard-normal draws supplied by `noise`.
pub fn integrate_sde_with(
    state: &SolverState,
    problem: &ControlProblem,
    x0: [f64; 2],
    t0: f64,
    n_steps: usize,
    noise: &mut dyn FnMut() -> f64,
) -> Result<TrajectoryResult> {
    let noise = problem.is_viscous().then_some(noise);
    integrate(state, problem, x0, t0, n_steps, noise)
}
