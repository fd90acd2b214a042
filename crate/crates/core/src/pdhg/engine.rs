use rayon::prelude::*;

use super::{step_sizes, AlphaPair, PdhgConfig, Residuals, SolveReport, SolverState, StepSizes};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Stencil};
use crate::precond::HelmholtzSolver;
use crate::problem::{
    prox_scalar, upwind_term, Branch, BranchInterval, ControlProblem, Lagrangian,
};

/// Coefficients of one dimension sampled on every node of the window.
struct AxisTable {
    a: Vec<f64>,
    b_up: Vec<f64>,
    b_down: Vec<f64>,
    control: bool,
}

/// In-slice neighbour offsets of one dimension, indexed by slice position.
struct Neighbours {
    plus: Vec<usize>,
    minus: Vec<usize>,
    fwd_live: Vec<bool>,
    bwd_live: Vec<bool>,
    inv_h: f64,
}

impl Neighbours {
    fn new(st: &Stencil, d: usize) -> Self {
        let sl = st.slice_len();
        let mut out = Neighbours {
            plus: Vec::with_capacity(sl),
            minus: Vec::with_capacity(sl),
            fwd_live: Vec::with_capacity(sl),
            bwd_live: Vec::with_capacity(sl),
            inv_h: 1.0 / st.h(d),
        };
        for i in 0..st.nx {
            for j in 0..st.ny {
                out.plus.push(st.plus(d, i, j));
                out.minus.push(st.minus(d, i, j));
                out.fwd_live.push(st.fwd_live(d, i, j));
                out.bwd_live.push(st.bwd_live(d, i, j));
            }
        }
        out
    }

    /// `(D^+ u, D^- u)` at slice position `s`.
    #[inline]
    fn one_sided(&self, u: &[f64], s: usize) -> (f64, f64) {
        (
            (u[self.plus[s]] - u[s]) * self.inv_h,
            (u[s] - u[self.minus[s]]) * self.inv_h,
        )
    }

    /// Second difference at slice position `s`.
    #[inline]
    fn second(&self, u: &[f64], s: usize) -> f64 {
        (u[self.plus[s]] + u[self.minus[s]] - 2.0 * u[s]) * self.inv_h * self.inv_h
    }
}

/// Iteration engine bound to a problem and a (possibly partial) time window.
pub struct Pdhg<'p> {
    problem: &'p ControlProblem,
    config: PdhgConfig,
    steps: StepSizes,
    grid: Grid,
    stencil: Stencil,
    precond: HelmholtzSolver,
    tables: Vec<AxisTable>,
    nbrs: Vec<Neighbours>,
    initial: Vec<f64>,
}

impl<'p> Pdhg<'p> {
    pub fn new(problem: &'p ControlProblem, config: &PdhgConfig) -> Result<Self> {
        let grid = problem.grid();
        let initial = terminal_slice(problem);
        Pdhg::for_window(
            problem,
            config,
            step_sizes(problem, config),
            0,
            grid.n_t(),
            initial,
        )
    }

    /// Engine for time slices `k0 .. k0 + n_t` of the problem grid with the
    /// first slice pinned to `initial`.
    pub(crate) fn for_window(
        problem: &'p ControlProblem,
        config: &PdhgConfig,
        steps: StepSizes,
        k0: usize,
        n_t: usize,
        initial: Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let full = problem.grid();
        let dt = full.dt();
        let grid = full.with_time(n_t, dt * (n_t - 1) as f64)?;
        let stencil = grid.stencil();
        let precond = HelmholtzSolver::build(&grid)?;
        let (_, nx, ny) = grid.shape();
        let sl = nx * ny;
        let mut tables = Vec::with_capacity(grid.dims());
        for d in 0..grid.dims() {
            let mut table = AxisTable {
                a: vec![0.0; n_t * sl],
                b_up: vec![0.0; n_t * sl],
                b_down: vec![0.0; n_t * sl],
                control: problem.control_dependent(d),
            };
            for k in 0..n_t {
                let t = full.time(k0 + k);
                for i in 0..nx {
                    for j in 0..ny {
                        let n = k * sl + i * ny + j;
                        let (a, b) = problem.coefficients(d, grid.point(i, j), t);
                        table.a[n] = a;
                        table.b_up[n] = b.max(0.0);
                        table.b_down[n] = b.min(0.0);
                    }
                }
            }
            tables.push(table);
        }
        let nbrs = (0..grid.dims())
            .map(|d| Neighbours::new(&stencil, d))
            .collect();
        Ok(Pdhg {
            nbrs,
            problem,
            config: config.clone(),
            steps,
            grid,
            stencil,
            precond,
            tables,
            initial,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn steps(&self) -> StepSizes {
        self.steps
    }

    fn lagrangian(&self) -> &Lagrangian {
        self.problem.lagrangian()
    }

    fn eps(&self) -> f64 {
        self.problem.epsilon()
    }

    pub(crate) fn check_state(&self, state: &SolverState) -> Result<()> {
        state.phi.check_grid(&self.grid)?;
        state.phi_tilde.check_grid(&self.grid)?;
        state.rho.check_grid(&self.grid)?;
        if state.alpha.len() != self.grid.dims() {
            return Err(Error::arg(
                "state",
                "control slots do not match the dimension",
            ));
        }
        for (d, slot) in state.alpha.iter().enumerate() {
            match (slot, self.tables[d].control) {
                (Some(pair), true) => {
                    pair.up.check_grid(&self.grid)?;
                    pair.down.check_grid(&self.grid)?;
                }
                (None, false) => {}
                _ => {
                    return Err(Error::arg(
                        "state",
                        format!("control slots of dimension {d} do not match the dynamics"),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn init_state(&self) -> SolverState {
        let sl = self.stencil.slice_len();
        let mut phi = Field::zeros(&self.grid);
        for row in phi.as_slice_mut().chunks_mut(sl) {
            row.copy_from_slice(&self.initial);
        }
        let alpha = self
            .tables
            .iter()
            .map(|t| {
                t.control.then(|| AlphaPair {
                    up: Field::zeros(&self.grid),
                    down: Field::zeros(&self.grid),
                })
            })
            .collect();
        SolverState {
            phi_tilde: phi.clone(),
            phi,
            rho: Field::constant(&self.grid, self.config.c),
            alpha,
        }
    }

    /// Upwind velocities `(v_up, v_down)` of dimension `d` at flat node `n`.
    #[inline(always)]
    fn velocities(&self, d: usize, n: usize, alpha: &[Option<(&[f64], &[f64])>]) -> (f64, f64) {
        let t = &self.tables[d];
        match alpha[d] {
            Some((up, down)) => (t.a[n] * up[n] + t.b_up[n], t.a[n] * down[n] + t.b_down[n]),
            None => (t.b_up[n], t.b_down[n]),
        }
    }

    #[inline]
    fn running_cost(&self, n: usize, alpha: &[Option<(&[f64], &[f64])>]) -> f64 {
        match *self.lagrangian() {
            Lagrangian::Quadratic { weight } => alpha
                .iter()
                .flatten()
                .map(|(u, d)| 0.5 * weight * (u[n] * u[n] + d[n] * d[n]))
                .sum(),
            // controls are kept feasible by the projection
            Lagrangian::BoxIndicator { .. } => 0.0,
        }
    }

    /// Laplacian of `u` at position `s` of a slice.
    #[inline]
    fn laplacian(&self, u: &[f64], s: usize) -> f64 {
        self.nbrs.iter().map(|nb| nb.second(u, s)).sum()
    }

    fn alpha_views(alpha: &[Option<AlphaPair>]) -> Vec<Option<(&[f64], &[f64])>> {
        alpha
            .iter()
            .map(|s| s.as_ref().map(|p| (p.up.as_slice(), p.down.as_slice())))
            .collect()
    }

    /// Projected ascent step on the multiplier, slices `k >= 1`.
    pub fn update_rho(&self, state: &mut SolverState) {
        let anchor = state.rho.as_slice().to_vec();
        let _ = self.rho_step(&anchor, state);
    }

    /// `rho = (anchor + tau_rho * bracket)_+` with the bracket evaluated at
    /// the current controls. Returns whether any entry moved by more than
    /// rounding.
    fn rho_step(&self, anchor: &[f64], state: &mut SolverState) -> bool {
        let st = &self.stencil;
        let sl = st.slice_len();
        let dt = st.dt;
        let tau = self.steps.tau_rho;
        let eps = self.eps();
        let pt = state.phi_tilde.as_slice();
        let alpha = Self::alpha_views(&state.alpha);
        let rho = state.rho.as_slice_mut();
        rho.par_chunks_mut(sl)
            .enumerate()
            .skip(1)
            .map(|(k, row)| {
                let cur = &pt[k * sl..(k + 1) * sl];
                let prev = &pt[(k - 1) * sl..k * sl];
                let mut moved = false;
                for (s, r) in row.iter_mut().enumerate() {
                    let n = k * sl + s;
                    let mut bracket = (cur[s] - prev[s]) / dt - self.running_cost(n, &alpha);
                    for d in 0..self.grid.dims() {
                        let (fwd, bwd) = self.nbrs[d].one_sided(cur, s);
                        let (vu, vd) = self.velocities(d, n, &alpha);
                        bracket -= vu * fwd + vd * bwd;
                    }
                    if eps > 0.0 {
                        bracket -= eps * self.laplacian(cur, s);
                    }
                    let new = (anchor[n] + tau * bracket).max(0.0);
                    moved |= !settled(*r, new);
                    *r = new;
                }
                moved
            })
            .reduce(|| false, |a, b| a || b)
    }

    /// Proximal step on every control slot, slices `k >= 1`.
    pub fn update_alpha(&self, state: &mut SolverState) {
        let anchor = state.alpha.clone();
        let _ = self.alpha_step(&anchor, state);
    }

    /// Proximal step centred at `anchor` with the current multiplier.
    /// Returns whether any control moved by more than rounding.
    fn alpha_step(&self, anchor: &[Option<AlphaPair>], state: &mut SolverState) -> bool {
        let st = &self.stencil;
        let sl = st.slice_len();

        let tau = self.steps.tau_alpha;
        let floor = self.config.rho_floor;
        let lag = *self.lagrangian();
        let pt = state.phi_tilde.as_slice();
        let rho = state.rho.as_slice();
        let mut moved = false;
        for (d, (slot, centre)) in state.alpha.iter_mut().zip(anchor).enumerate() {
            let (Some(pair), Some(centre)) = (slot, centre) else {
                continue;
            };
            let (up0, down0) = (centre.up.as_slice(), centre.down.as_slice());
            let a = &self.tables[d].a;
            moved |= pair
                .up
                .as_slice_mut()
                .par_chunks_mut(sl)
                .zip(pair.down.as_slice_mut().par_chunks_mut(sl))
                .enumerate()
                .skip(1)
                .map(|(k, (up, down))| {
                    let cur = &pt[k * sl..(k + 1) * sl];
                    let mut moved = false;
                    for s in 0..sl {
                        let n = k * sl + s;
                        let (fwd, bwd) = self.nbrs[d].one_sided(cur, s);
                        let u =
                            prox_scalar(&lag, a[n], fwd, rho[n], up0[n], tau, Branch::Up, floor);
                        let v = prox_scalar(
                            &lag,
                            a[n],
                            bwd,
                            rho[n],
                            down0[n],
                            tau,
                            Branch::Down,
                            floor,
                        );
                        moved |= !settled(up[s], u) || !settled(down[s], v);
                        up[s] = u;
                        down[s] = v;
                    }
                    moved
                })
                .reduce(|| false, |a, b| a || b);
        }
        moved
    }

    /// Continuity residual `D_t^+ rho + div + eps Lap rho` with the terminal
    /// ghost `rho = c`; the first slice is zero.
    fn continuity(&self, state: &SolverState) -> Vec<f64> {
        let st = &self.stencil;
        let sl = st.slice_len();
        let (nt, dt) = (st.nt, st.dt);
        let c = self.config.c;
        let eps = self.eps();
        let rho = state.rho.as_slice();
        let alpha = Self::alpha_views(&state.alpha);
        let mut out = vec![0.0; nt * sl];
        out.par_chunks_mut(sl)
            .enumerate()
            .skip(1)
            .for_each(|(k, row)| {
                let cur = &rho[k * sl..(k + 1) * sl];
                self.add_divergence(&alpha, cur, k, row);
                for (s, r) in row.iter_mut().enumerate() {
                    let n = k * sl + s;
                    let next = if k + 1 < nt { rho[n + sl] } else { c };
                    *r += (next - cur[s]) / dt;
                    if eps > 0.0 {
                        *r += eps * self.laplacian(cur, s);
                    }
                }
            });
        out
    }

    /// Adds `sum_d (D^+)^T (v_up rho) + (D^-)^T (v_down rho)` on slice `k`
    /// to `out`, using exact transposes of the one-sided differences.
    fn add_divergence(
        &self,
        alpha: &[Option<(&[f64], &[f64])>],
        rho: &[f64],
        k: usize,
        out: &mut [f64],
    ) {
        let sl = rho.len();
        let base = k * sl;
        let mut up = vec![0.0; sl];
        let mut down = vec![0.0; sl];
        for (d, nb) in self.nbrs.iter().enumerate() {
            for s in 0..sl {
                let (vu, vd) = self.velocities(d, base + s, alpha);
                up[s] = vu * rho[s];
                down[s] = vd * rho[s];
            }
            for s in 0..sl {
                // (D^+)^T psi_s = (psi_{s-1} [live] - psi_s [live]) / h
                // (D^-)^T psi_s = (psi_s [live] - psi_{s+1} [live]) / h
                let mut v = 0.0;
                if nb.fwd_live[s] {
                    v += -up[s] - down[nb.plus[s]];
                }
                if nb.bwd_live[s] {
                    v += up[nb.minus[s]] + down[s];
                }
                out[s] += v * nb.inv_h;
            }
        }
    }

    /// `sum_d v_up D^+ u + v_down D^- u` on slice `k` of `u`, with the
    /// velocities of the controls in `state`.
    pub fn advection(&self, state: &SolverState, u: &Field, k: usize) -> Result<Vec<f64>> {
        self.check_state(state)?;
        u.check_grid(&self.grid)?;
        let sl = self.stencil.slice_len();
        if k >= self.stencil.nt {
            return Err(Error::arg("k", format!("slice {k} out of range")));
        }
        let alpha = Self::alpha_views(&state.alpha);
        let cur = &u.as_slice()[k * sl..(k + 1) * sl];
        Ok((0..sl)
            .map(|s| {
                (0..self.grid.dims())
                    .map(|d| {
                        let (fwd, bwd) = self.nbrs[d].one_sided(cur, s);
                        let (vu, vd) = self.velocities(d, k * sl + s, &alpha);
                        vu * fwd + vd * bwd
                    })
                    .sum()
            })
            .collect())
    }

    /// Transpose of [`Pdhg::advection`] applied to slice `k` of `rho`.
    pub fn divergence(&self, state: &SolverState, rho: &Field, k: usize) -> Result<Vec<f64>> {
        self.check_state(state)?;
        rho.check_grid(&self.grid)?;
        let sl = self.stencil.slice_len();
        if k >= self.stencil.nt {
            return Err(Error::arg("k", format!("slice {k} out of range")));
        }
        let alpha = Self::alpha_views(&state.alpha);
        let mut out = vec![0.0; sl];
        self.add_divergence(&alpha, &rho.as_slice()[k * sl..(k + 1) * sl], k, &mut out);
        Ok(out)
    }

    /// Preconditioned descent on `phi` followed by extrapolation. Returns the
    /// sup norm of the continuity residual that drove the step.
    pub fn update_phi(&self, state: &mut SolverState) -> f64 {
        let sl = self.stencil.slice_len();
        let mut r = self.continuity(state);
        let sup = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.precond.apply_pinned_in_place(&mut r);
        let tau = self.steps.tau_phi;
        let phi = state.phi.as_slice_mut();
        let tilde = state.phi_tilde.as_slice_mut();
        phi.par_iter_mut()
            .zip(tilde.par_iter_mut())
            .zip(r.par_iter())
            .enumerate()
            .for_each(|(n, ((p, t), u))| {
                let old = *p;
                let new = if n < sl {
                    self.initial[n]
                } else {
                    old + tau * u
                };
                *p = new;
                *t = 2.0 * new - old;
            });
        sup
    }

    /// `(hj, prox)` residuals of the current `phi` and controls.
    fn hj_and_prox(&self, state: &SolverState) -> (f64, f64) {
        let st = &self.stencil;
        let sl = st.slice_len();
        let dt = st.dt;
        let eps = self.eps();
        let lag = *self.lagrangian();
        let phi = state.phi.as_slice();
        let alpha = Self::alpha_views(&state.alpha);
        (1..st.nt)
            .into_par_iter()
            .map(|k| {
                let cur = &phi[k * sl..(k + 1) * sl];
                let prev = &phi[(k - 1) * sl..k * sl];
                let mut hj = 0.0f64;
                let mut prox = 0.0f64;
                for s in 0..sl {
                    let n = k * sl + s;
                    let mut v = (cur[s] - prev[s]) / dt;
                    for d in 0..self.grid.dims() {
                        let t = &self.tables[d];
                        let (fwd, bwd) = self.nbrs[d].one_sided(cur, s);
                        v += upwind_term(&lag, t.a[n], t.b_up[n] + t.b_down[n], fwd, bwd);
                        if let Some((up, down)) = alpha[d] {
                            prox = prox
                                .max(branch_gap(&lag, t.a[n], fwd, up[n], Branch::Up))
                                .max(branch_gap(&lag, t.a[n], bwd, down[n], Branch::Down));
                        }
                    }
                    if eps > 0.0 {
                        v -= eps * self.laplacian(cur, s);
                    }
                    hj = hj.max(v.abs());
                }
                (hj, prox)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
    }

    pub fn residuals(&self, state: &SolverState) -> Residuals {
        let cont = self.continuity(state);
        let continuity = cont.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (hj, prox) = self.hj_and_prox(state);
        Residuals {
            hj,
            prox,
            continuity,
        }
    }

    pub(crate) fn terminal_gap(&self, state: &SolverState) -> (f64, f64) {
        let st = &self.stencil;
        let sl = st.slice_len();
        let k = st.nt - 1;
        let rho = state.rho.as_slice();
        let alpha = Self::alpha_views(&state.alpha);
        let cur = &rho[k * sl..];
        let mut div = vec![0.0; sl];
        self.add_divergence(&alpha, cur, k, &mut div);
        let mut gap = 0.0f64;
        let mut sup = 0.0f64;
        for s in 0..sl {
            gap = gap.max((cur[s] - self.config.c).abs());
            let mut v = div[s];
            if self.eps() > 0.0 {
                v += self.eps() * self.laplacian(cur, s);
            }
            sup = sup.max(v.abs());
        }
        (gap, st.dt * (10.0 * self.config.tol + sup))
    }

    /// One outer iteration; returns the residuals after the step.
    ///
    /// The inner loop alternates maximisation over the multiplier and the
    /// controls of the same proximal subproblem, so both stay anchored at the
    /// iterate the outer step started from. Once a pass leaves everything in
    /// place the remaining passes would repeat it, so they are skipped.
    pub fn step(&self, state: &mut SolverState) -> Residuals {
        let rho0 = state.rho.as_slice().to_vec();
        let alpha0 = state.alpha.clone();
        for _ in 0..self.config.n_inner {
            let moved_rho = self.rho_step(&rho0, state);
            let moved_alpha = self.alpha_step(&alpha0, state);
            if !(moved_rho || moved_alpha) {
                break;
            }
        }
        let continuity = self.update_phi(state);
        let (hj, prox) = self.hj_and_prox(state);
        Residuals {
            hj,
            prox,
            continuity,
        }
    }

    pub(crate) fn run(&self, state: &mut SolverState) -> SolveReport {
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..self.config.max_outer {
            let res = self.step(state);
            history.push(res);
            if !res.max().is_finite() {
                break;
            }
            if res.max() <= self.config.tol {
                converged = true;
                break;
            }
        }
        SolveReport {
            outer_iterations: history.len(),
            residual_history: history,
            converged,
            wall_time: 0.0,
            steps: self.steps,
        }
    }
}

/// True when `new` differs from `old` only at rounding level.
#[inline]
fn settled(old: f64, new: f64) -> bool {
    (new - old).abs() <= 1e-13 * (1.0 + old.abs())
}

/// Distance from `alpha` to the branch-optimal control for gradient `grad`:
/// exact for quadratic costs, the unit-step natural residual for boxes.
#[inline]
fn branch_gap(lag: &Lagrangian, a: f64, grad: f64, alpha: f64, branch: Branch) -> f64 {
    let set = BranchInterval::new(lag, a, branch);
    let target = match *lag {
        Lagrangian::Quadratic { weight } => set.project(-a * grad / weight),
        Lagrangian::BoxIndicator { .. } => set.project(alpha - a * grad),
    };
    (alpha - target).abs()
}

pub(crate) fn terminal_slice(problem: &ControlProblem) -> Vec<f64> {
    let grid = problem.grid();
    let (_, nx, ny) = grid.shape();
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            out.push(problem.g(grid.point(i, j)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, SpatialAxis};
    use crate::pdhg::{init_state, solve, solve_windowed};
    use crate::problem::{AffineDynamics, TerminalCost};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(nx: usize, nt: usize, horizon: f64) -> Grid {
        Grid::one_d(0.0, 2.0, nx, Boundary::Periodic, nt, horizon).unwrap()
    }

    fn plane(b0: Boundary) -> Grid {
        Grid::new(
            vec![
                SpatialAxis::new(-2.0, 2.0, 7, b0),
                SpatialAxis::new(-1.0, 1.0, 5, Boundary::Periodic),
            ],
            4,
            1.0,
        )
        .unwrap()
    }

    fn zero_dynamics(grid: Grid) -> ControlProblem {
        ControlProblem::new(
            grid,
            AffineDynamics::zero(1),
            Lagrangian::Quadratic { weight: 1.0 },
            TerminalCost::Constant { value: 0.0 },
            0.0,
        )
        .unwrap()
    }

    fn constant_g(grid: Grid, value: f64) -> ControlProblem {
        let dims = grid.dims();
        ControlProblem::new(
            grid,
            AffineDynamics::quadratic_xdep(dims),
            Lagrangian::Quadratic { weight: 1.0 },
            TerminalCost::Constant { value },
            0.0,
        )
        .unwrap()
    }

    fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field {
        let mut f = Field::zeros(grid);
        for v in f.as_slice_mut() {
            *v = rng.random_range(lo..hi);
        }
        f
    }

    /// State with random fields and controls inside their branch sets.
    fn random_state(engine: &Pdhg, rng: &mut ChaCha8Rng) -> SolverState {
        let grid = engine.grid().clone();
        let mut state = engine.init_state();
        state.phi = random_field(&grid, rng, -1.0, 1.0);
        state.phi_tilde = random_field(&grid, rng, -1.0, 1.0);
        state.rho = random_field(&grid, rng, 0.0, 2.0);
        for (d, slot) in state.alpha.iter_mut().enumerate() {
            if let Some(pair) = slot {
                for (n, (u, v)) in pair
                    .up
                    .as_slice_mut()
                    .iter_mut()
                    .zip(pair.down.as_slice_mut())
                    .enumerate()
                {
                    let a = engine.tables[d].a[n];
                    let lag = engine.lagrangian();
                    *u = BranchInterval::new(lag, a, Branch::Up).project(rng.random_range(-2.0..2.0));
                    *v = BranchInterval::new(lag, a, Branch::Down)
                        .project(rng.random_range(-2.0..2.0));
                }
            }
        }
        state
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn problems() -> Vec<ControlProblem> {
        vec![
            ControlProblem::quadratic_xdep(line(12, 4, 1.0), 0.0).unwrap(),
            ControlProblem::box_xdep(line(9, 3, 1.0), 0.0).unwrap(),
            ControlProblem::newton(plane(Boundary::Neumann), 0.0).unwrap(),
            ControlProblem::quadratic_xdep(plane(Boundary::Periodic), 0.0).unwrap(),
        ]
    }

    #[test]
    fn init_state_examples() {
        let p = constant_g(line(8, 5, 1.0), 3.0);
        let config = PdhgConfig {
            c: 1.0,
            ..PdhgConfig::default()
        };
        let s = init_state(&p, &config).unwrap();
        assert!(s.phi.as_slice().iter().all(|&v| v == 3.0));
        assert_eq!(s.phi, s.phi_tilde);
        assert!(s.rho.as_slice().iter().all(|&v| v == 1.0));
        let pair = s.alpha[0].as_ref().unwrap();
        assert!(pair.up.as_slice().iter().all(|&v| v == 0.0));
        assert!(pair.down.as_slice().iter().all(|&v| v == 0.0));

        let newton = ControlProblem::newton(plane(Boundary::Neumann), 0.0).unwrap();
        let s = init_state(&newton, &config).unwrap();
        assert!(s.alpha[0].is_some() && s.alpha[1].is_none());
    }

    #[test]
    fn update_rho_examples() {
        // unit time step, no dynamics: the bracket is D_t^- phi_tilde
        let p = zero_dynamics(line(4, 3, 2.0));
        let config = PdhgConfig {
            tau_rho: Some(1.0),
            ..PdhgConfig::default()
        };
        let engine = Pdhg::new(&p, &config).unwrap();
        let mut s = engine.init_state();
        s.rho = Field::constant(engine.grid(), 0.2);
        s.phi_tilde = Field::from_fn(engine.grid(), |k, _| [0.0, -0.5, -0.2][k]);
        engine.update_rho(&mut s);
        for i in 0..4 {
            assert_eq!(s.rho.at(0, i, 0), 0.2);
            assert_eq!(s.rho.at(1, i, 0), 0.0);
            assert_abs_diff_eq!(s.rho.at(2, i, 0), 0.5, epsilon = 1e-15);
        }

        // stationary state: bracket vanishes
        let p = constant_g(line(6, 4, 1.0), 2.0);
        let engine = Pdhg::new(&p, &config).unwrap();
        let mut s = engine.init_state();
        let before = s.rho.clone();
        engine.update_rho(&mut s);
        assert_eq!(s.rho, before);
    }

    #[test]
    fn update_alpha_examples() {
        let config = PdhgConfig::default();
        let p = ControlProblem::quadratic_xdep(line(10, 4, 1.0), 0.0).unwrap();
        let engine = Pdhg::new(&p, &config).unwrap();
        let mut s = engine.init_state();
        s.phi_tilde = Field::constant(engine.grid(), 0.7);
        engine.update_alpha(&mut s);
        let pair = s.alpha[0].as_ref().unwrap();
        assert!(pair.up.as_slice().iter().all(|&v| v == 0.0));
        assert!(pair.down.as_slice().iter().all(|&v| v == 0.0));

        // single node against the closed form with the same inputs
        let mut s = engine.init_state();
        s.phi_tilde = Field::from_fn(engine.grid(), |_, x| x[0] * x[0]);
        s.rho = Field::constant(engine.grid(), 0.5);
        engine.update_alpha(&mut s);
        let grid = engine.grid();
        let (k, i) = (2, 3);
        let t = grid.time(k);
        let x = grid.point(i, 0);
        let h = grid.dx(0);
        let fwd = (grid.point(i + 1, 0)[0].powi(2) - x[0] * x[0]) / h;
        let expected = crate::problem::prox_alpha(
            &p,
            x,
            t,
            0,
            fwd,
            0.5,
            0.0,
            engine.steps().tau_alpha,
            Branch::Up,
        )
        .unwrap();
        assert_eq!(s.alpha[0].as_ref().unwrap().up.at(k, i, 0), expected);

        // steep descent along x saturates the up slot of the box problem
        let p = ControlProblem::box_xdep(line(10, 4, 1.0), 0.0).unwrap();
        let engine = Pdhg::new(&p, &config).unwrap();
        let mut s = engine.init_state();
        s.phi_tilde = Field::from_fn(engine.grid(), |_, x| -1e4 * x[0]);
        engine.update_alpha(&mut s);
        let up = &s.alpha[0].as_ref().unwrap().up;
        for k in 1..4 {
            for i in 0..9 {
                assert_eq!(up.at(k, i, 0), -1.0);
            }
            assert_eq!(up.at(0, 0, 0), 0.0);
        }
    }

    #[test]
    fn stationary_phi_update_keeps_phi() {
        let p = constant_g(line(8, 5, 1.0), -1.5);
        let engine = Pdhg::new(&p, &PdhgConfig::default()).unwrap();
        let mut s = engine.init_state();
        let sup = engine.update_phi(&mut s);
        assert_eq!(sup, 0.0);
        assert!(s.phi.as_slice().iter().all(|&v| v == -1.5));
        assert_eq!(s.phi, s.phi_tilde);
    }

    #[test]
    fn phi_update_is_the_preconditioned_residual() {
        let p = ControlProblem::quadratic_xdep(line(12, 5, 1.0), 0.0).unwrap();
        let engine = Pdhg::new(&p, &PdhgConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = random_state(&engine, &mut rng);
        let sl = engine.grid().slice_len();
        let mut r = engine.continuity(&s);
        engine.precond.apply_pinned_in_place(&mut r);
        let old = s.phi.clone();
        engine.update_phi(&mut s);
        let tau = engine.steps().tau_phi;
        for n in 0..old.as_slice().len() {
            let new = s.phi.as_slice()[n];
            if n < sl {
                assert_eq!(new, engine.initial[n]);
            } else {
                assert_abs_diff_eq!(new, old.as_slice()[n] + tau * r[n], epsilon = 1e-14);
            }
            assert_abs_diff_eq!(
                s.phi_tilde.as_slice()[n],
                2.0 * new - old.as_slice()[n],
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn constant_g_is_a_fixed_point() {
        for grid in [line(16, 6, 1.0), plane(Boundary::Neumann)] {
            let p = constant_g(grid, 3.0);
            let (s, report) = solve(&p, &PdhgConfig::default()).unwrap();
            assert!(report.converged);
            assert!(report.outer_iterations <= 2);
            let r = report.final_residuals();
            assert!(r.hj < 1e-12 && r.prox < 1e-12 && r.continuity < 1e-12);
            assert!(s.phi.as_slice().iter().all(|&v| v == 3.0));
        }
    }

    #[test]
    fn stationary_residuals_vanish_and_perturbation_shows() {
        let p = constant_g(line(10, 6, 1.0), 1.0);
        let config = PdhgConfig::default();
        let engine = Pdhg::new(&p, &config).unwrap();
        let mut s = engine.init_state();
        assert_eq!(engine.residuals(&s), Residuals::default());
        let delta = 1e-3;
        s.phi.values_mut()[[3, 4, 0]] += delta;
        let r = engine.residuals(&s);
        // the time difference alone contributes delta / dt; the quadratic
        // Hamiltonian only adds O(delta^2 / dx^2)
        let dt = engine.grid().dt();
        let dx = engine.grid().dx(0);
        assert!(r.hj >= delta / dt - 1.21 * (delta / dx).powi(2));
        assert!(r.hj > 0.0);
    }

    #[test]
    fn windows_match_the_plain_solver() {
        let p = ControlProblem::quadratic_xdep(line(16, 9, 1.0), 0.0).unwrap();
        let config = PdhgConfig {
            max_outer: 50,
            ..PdhgConfig::default()
        };
        let (a, ra) = solve(&p, &config).unwrap();
        let (b, rb) = solve_windowed(&p, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.residual_history, rb.residual_history);

        let p = constant_g(line(16, 9, 1.0), 3.0);
        let config = PdhgConfig {
            windows: 2,
            ..PdhgConfig::default()
        };
        let (s, report) = solve_windowed(&p, &config).unwrap();
        assert!(report.converged);
        assert!(s.phi.as_slice().iter().all(|&v| v == 3.0));

        let bad = PdhgConfig {
            windows: 3,
            ..PdhgConfig::default()
        };
        assert!(solve_windowed(&p, &bad).is_err());
    }

    #[test]
    fn step_size_bound_examples() {
        let quad = ControlProblem::quadratic_xdep(line(160, 5, 1.0), 0.0).unwrap();
        assert_abs_diff_eq!(
            crate::pdhg::estimate_stepsize_bound(&quad),
            2.21,
            epsilon = 1e-12
        );
        // the Neumann axis contains the endpoints +-2 where |b| peaks
        let newton = ControlProblem::newton(plane(Boundary::Neumann), 0.0).unwrap();
        assert_abs_diff_eq!(
            crate::pdhg::estimate_stepsize_bound(&newton),
            5.0,
            epsilon = 1e-12
        );
        let zero = zero_dynamics(line(5, 3, 1.0));
        assert_eq!(crate::pdhg::estimate_stepsize_bound(&zero), 1.0);
    }

    #[test]
    fn viscous_steps_are_derated() {
        let p = ControlProblem::quadratic_xdep(line(40, 11, 1.0), 0.1).unwrap();
        let steps = step_sizes(&p, &PdhgConfig::default());
        let dx = 2.0 / 40.0;
        let expected = dx * dx / (4.0 * 0.1 * 0.1);
        assert_abs_diff_eq!(steps.derating, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(steps.tau_phi * steps.tau_rho * steps.bound.powi(2), 0.4 * expected * expected, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn divergence_is_the_transpose_of_advection(seed in any::<u64>(), which in 0usize..4) {
            let p = &problems()[which];
            let engine = Pdhg::new(p, &PdhgConfig::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_state(&engine, &mut rng);
            let sl = engine.grid().slice_len();
            for k in 0..engine.grid().n_t() {
                let adv = engine.advection(&s, &s.phi, k).unwrap();
                let div = engine.divergence(&s, &s.rho, k).unwrap();
                let rho = &s.rho.as_slice()[k * sl..(k + 1) * sl];
                let phi = &s.phi.as_slice()[k * sl..(k + 1) * sl];
                let lhs = dot(rho, &adv);
                let rhs = dot(phi, &div);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{lhs} {rhs}");
            }
        }

        #[test]
        fn divergence_telescopes(seed in any::<u64>(), which in 0usize..4) {
            let p = &problems()[which];
            let engine = Pdhg::new(p, &PdhgConfig::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_state(&engine, &mut rng);
            let sl = engine.grid().slice_len();
            let cont = engine.continuity(&s);
            let dt = engine.grid().dt();
            let nt = engine.grid().n_t();
            let mass = |k: usize| s.rho.as_slice()[k * sl..(k + 1) * sl].iter().sum::<f64>();
            for k in 1..nt {
                let div: f64 = engine.divergence(&s, &s.rho, k).unwrap().iter().sum();
                prop_assert!(div.abs() <= 1e-12);
                let next = if k + 1 < nt { mass(k + 1) } else { sl as f64 * engine.config.c };
                let total: f64 = cont[k * sl..(k + 1) * sl].iter().sum();
                prop_assert!((total - (next - mass(k)) / dt).abs() <= 1e-11);
            }
        }

        #[test]
        fn multiplier_stays_nonnegative_and_row_zero_pinned(seed in any::<u64>(), which in 0usize..4) {
            let p = &problems()[which];
            let engine = Pdhg::new(p, &PdhgConfig::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = random_state(&engine, &mut rng);
            let sl = engine.grid().slice_len();
            for _ in 0..3 {
                engine.step(&mut s);
                prop_assert!(s.rho.as_slice().iter().all(|&v| v >= 0.0));
                prop_assert_eq!(&s.phi.as_slice()[..sl], &engine.initial[..]);
            }
        }
    }
}
