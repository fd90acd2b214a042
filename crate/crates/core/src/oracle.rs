//! Reference computations for validating the solver: an explicit monotone
//! scheme built on the same numerical Hamiltonian, a brute-force proximal
//! minimiser and field norms.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Stencil};
use crate::problem::{prox_alpha, Branch, BranchInterval, ControlProblem, RHO_FLOOR};

/// Safety factor on the sampled speed bound.
const SPEED_SAFETY: f64 = 1.2;
/// Relative step of the finite differences used to estimate `dH/dp`.
const SPEED_PROBE: f64 = 1e-6;
/// Smallest number of nodes handed to one worker.
const PAR_CHUNK: usize = 512;

/// Node coordinates and neighbour tables of one time slice.
struct SliceOps<'a> {
    problem: &'a ControlProblem,
    st: Stencil,
    points: Vec<[f64; 2]>,
    dims: usize,
}

impl<'a> SliceOps<'a> {
    fn new(problem: &'a ControlProblem) -> Self {
        let grid = problem.grid();
        let (_, nx, ny) = grid.shape();
        let points = (0..nx)
            .flat_map(|i| (0..ny).map(move |j| (i, j)))
            .map(|(i, j)| grid.point(i, j))
            .collect();
        SliceOps {
            problem,
            st: grid.stencil(),
            points,
            dims: grid.dims(),
        }
    }

    /// `(D+u, D-u)` at node `s`.
    fn gradients(&self, u: &[f64], s: usize) -> ([f64; 2], [f64; 2]) {
        let (i, j) = (s / self.st.ny, s % self.st.ny);
        let mut fwd = [0.0; 2];
        let mut bwd = [0.0; 2];
        for d in 0..self.dims {
            let h = self.st.h(d);
            fwd[d] = (u[self.st.plus(d, i, j)] - u[s]) / h;
            bwd[d] = (u[s] - u[self.st.minus(d, i, j)]) / h;
        }
        (fwd, bwd)
    }

    fn step(&self, u: &[f64], t: f64, dt: f64, out: &mut [f64]) {
        out.par_iter_mut()
            .with_min_len(PAR_CHUNK)
            .enumerate()
            .for_each(|(s, o)| {
                let (fwd, bwd) = self.gradients(u, s);
                *o = u[s]
                    - dt * self
                        .problem
                        .numerical_hamiltonian(self.points[s], t, fwd, bwd);
            });
    }

    /// `sum_d (|dH/dp_up_d| + |dH/dp_down_d|) / dx_d` at one node, probed at the
    /// node's own gradients and at the corners of `[-p_max, p_max]`.
    fn node_rate(&self, x: [f64; 2], t: f64, own: ([f64; 2], [f64; 2]), p_max: [f64; 2]) -> f64 {
        let mut samples = vec![own];
        for d in 0..self.dims {
            for (su, sd) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut pu = own.0;
                let mut pd = own.1;
                pu[d] = su * p_max[d];
                pd[d] = sd * p_max[d];
                samples.push((pu, pd));
            }
        }
        let h = |pu, pd| self.problem.numerical_hamiltonian(x, t, pu, pd);
        let mut rate = 0.0f64;
        for (pu, pd) in samples {
            let mut r = 0.0;
            for d in 0..self.dims {
                let e = SPEED_PROBE * (1.0 + pu[d].abs().max(pd[d].abs()));
                let (mut a, mut b) = (pu, pu);
                a[d] += e;
                b[d] -= e;
                let du = (h(a, pd) - h(b, pd)) / (2.0 * e);
                let (mut a, mut b) = (pd, pd);
                a[d] += e;
                b[d] -= e;
                let dd = (h(pu, a) - h(pu, b)) / (2.0 * e);
                r += (du.abs() + dd.abs()) / self.st.h(d);
            }
            rate = rate.max(r);
        }
        rate
    }

    /// Largest explicit step keeping the scheme monotone at `cfl = 1`, with
    /// the speed bound inflated by [`SPEED_SAFETY`].
    fn stable_step(&self, u: &[f64], t: f64) -> f64 {
        let grads: Vec<_> = (0..u.len()).map(|s| self.gradients(u, s)).collect();
        let mut p_max = [0.0f64; 2];
        for (fwd, bwd) in &grads {
            for d in 0..self.dims {
                p_max[d] = p_max[d].max(fwd[d].abs()).max(bwd[d].abs());
            }
        }
        let rate = grads
            .par_iter()
            .with_min_len(PAR_CHUNK)
            .zip(&self.points)
            .map(|(&g, &x)| self.node_rate(x, t, g, p_max))
            .reduce(|| 0.0, f64::max);
        if rate > 0.0 {
            1.0 / (SPEED_SAFETY * rate)
        } else {
            f64::INFINITY
        }
    }
}

fn terminal_slice(problem: &ControlProblem) -> Vec<f64> {
    let grid = problem.grid();
    let (_, nx, ny) = grid.shape();
    (0..nx)
        .flat_map(|i| (0..ny).map(move |j| (i, j)))
        .map(|(i, j)| problem.g(grid.point(i, j)))
        .collect()
}

fn check_first_order(problem: &ControlProblem) -> Result<()> {
    if problem.is_viscous() {
        return Err(Error::InvalidProblem(
            "the explicit reference scheme only handles eps = 0".into(),
        ));
    }
    Ok(())
}

/// Explicit Euler for `phi_t + H^(x, t, D+phi, D-phi) = 0` from `phi = g`,
/// sub-stepping each grid interval so that `dt_sub <= cfl * dx / V` with `V`
/// the sampled speed bound of the current slice. Returns the solution on the
/// problem's time slices.
pub fn explicit_solve(problem: &ControlProblem, cfl_factor: f64) -> Result<Field> {
    explicit_solve_from(problem, &terminal_slice(problem), cfl_factor)
}

/// As [`explicit_solve`] starting from `initial` (one slice, `n_x * n_y`
/// values) instead of the terminal cost.
pub fn explicit_solve_from(
    problem: &ControlProblem,
    initial: &[f64],
    cfl_factor: f64,
) -> Result<Field> {
    check_first_order(problem)?;
    if !(cfl_factor > 0.0 && cfl_factor <= 1.0) {
        return Err(Error::arg(
            "cfl_factor",
            format!("{cfl_factor} is not in (0, 1]"),
        ));
    }
    march(problem, initial, |ops, u, t, dt| {
        let limit = cfl_factor * ops.stable_step(u, t);
        if limit.is_finite() {
            (dt / limit).ceil().max(1.0) as usize
        } else {
            1
        }
    })
}

/// Explicit Euler with a single step per grid interval and no stability
/// control. Used to show what the implicit solver avoids.
pub fn explicit_solve_unrestricted(problem: &ControlProblem) -> Result<Field> {
    check_first_order(problem)?;
    march(problem, &terminal_slice(problem), |_, _, _, _| 1)
}

fn march(
    problem: &ControlProblem,
    initial: &[f64],
    substeps: impl Fn(&SliceOps, &[f64], f64, f64) -> usize,
) -> Result<Field> {
    let grid = problem.grid();
    let ops = SliceOps::new(problem);
    let sl = grid.slice_len();
    let dt = grid.dt();
    let mut out = Field::zeros(grid);
    if initial.len() != sl {
        return Err(Error::arg(
            "initial",
            format!("expected {sl} values, got {}", initial.len()),
        ));
    }
    let mut u = initial.to_vec();
    let mut next = vec![0.0; sl];
    out.as_slice_mut()[..sl].copy_from_slice(&u);
    for k in 1..grid.n_t() {
        let t0 = grid.time(k - 1);
        let m = substeps(&ops, &u, t0, dt);
        let h = dt / m as f64;
        for q in 0..m {
            ops.step(&u, t0 + q as f64 * h, h, &mut next);
            std::mem::swap(&mut u, &mut next);
        }
        out.as_slice_mut()[k * sl..(k + 1) * sl].copy_from_slice(&u);
    }
    Ok(out)
}

/// Minimises `a alpha grad + L(alpha) + rho / (2 tau) (alpha - alpha_prev)^2`
/// over the branch-feasible part of `[-10, 10]` by scanning a `1e-4` lattice
/// anchored at the lower end, plus the interval ends and the projected
/// previous value.
#[allow(clippy::too_many_arguments)]
pub fn prox_bruteforce(
    problem: &ControlProblem,
    x: [f64; 2],
    t: f64,
    axis: usize,
    grad: f64,
    rho: f64,
    alpha_prev: f64,
    tau_alpha: f64,
    branch: Branch,
) -> Result<f64> {
    // reuse the argument checks of the closed form
    prox_alpha(
        problem, x, t, axis, grad, rho, alpha_prev, tau_alpha, branch,
    )?;
    let (a, _) = problem.coefficients(axis, x, t);
    let lag = problem.lagrangian();
    let interval = BranchInterval::new(lag, a, branch);
    let lo = interval.lo.max(-10.0);
    let hi = interval.hi.min(10.0);
    let rho = rho.max(RHO_FLOOR);
    let objective =
        |v: f64| a * v * grad + lag.value(v) + rho / (2.0 * tau_alpha) * (v - alpha_prev).powi(2);

    let steps = ((hi - lo) / 1e-4).floor() as usize;
    let extra = [hi, interval.project(alpha_prev).clamp(lo, hi)];
    let mut best = (objective(lo), lo);
    for v in (1..=steps).map(|n| lo + n as f64 * 1e-4).chain(extra) {
        if v > hi {
            continue;
        }
        let f = objective(v);
        if f < best.0 {
            best = (f, v);
        }
    }
    Ok(best.1)
}

/// Norms of `a - b` on a shared grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub l_inf: f64,
    /// `sqrt(sum |a - b|^2 w)` with `w` the space-time cell volume.
    pub l2: f64,
    /// Time slice holding the largest difference.
    pub worst_slice: usize,
    /// `w` times the number of nodes.
    pub total_weight: f64,
}

pub fn compare(a: &Field, b: &Field) -> Result<ComparisonReport> {
    b.check_grid(a.grid())?;
    let grid: &Grid = a.grid();
    let sl = grid.slice_len();
    let w = grid.cell_volume();
    let mut l_inf = 0.0f64;
    let mut worst_slice = 0;
    let mut sq = 0.0;
    for (n, (x, y)) in a.as_slice().iter().zip(b.as_slice()).enumerate() {
        let d = (x - y).abs();
        if d > l_inf || d.is_nan() {
            l_inf = if d.is_nan() { f64::INFINITY } else { d };
            worst_slice = n / sl;
        }
        sq += d * d;
    }
    Ok(ComparisonReport {
        l_inf,
        l2: (sq * w).sqrt(),
        worst_slice,
        total_weight: w * grid.len() as f64,
    })
}
