//! Spectral inverse of `M = I - D_tt - sum_d D_dd` on a space-time grid.
//!
//! Periodic axes are diagonalised by the DFT, Neumann axes and the time axis
//! by the DCT-II, which is the eigenbasis of the second difference with
//! reflected ghosts. The inverse is a pointwise multiplication in the joint
//! transform space.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::grid::{Boundary, Field, Grid};

#[derive(Clone)]
enum AxisPlan {
    /// Axis of length one; nothing to transform.
    Trivial,
    Cosine(Arc<dyn TransformType2And3<f64>>),
    Fourier {
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
}

impl AxisPlan {
    fn is_fourier(&self) -> bool {
        matches!(self, AxisPlan::Fourier { .. })
    }
}

/// Eigenvalues of the negated second difference on an axis with `n` points
/// and spacing `h`, in transform order.
pub fn axis_eigenvalues(n: usize, h: f64, periodic: bool) -> Vec<f64> {
    let theta = if periodic {
        2.0 * PI / n as f64
    } else {
        PI / n as f64
    };
    (0..n)
        .map(|k| (2.0 - 2.0 * (theta * k as f64).cos()) / (h * h))
        .collect()
}

#[derive(Clone)]
pub struct HelmholtzSolver {
    grid: Grid,
    shape: [usize; 3],
    plans: [AxisPlan; 3],
    symbol: Vec<f64>,
    // symbol times the transform round-trip normalisation
    scaled: Vec<f64>,
    // per spatial mode: sum of spatial eigenvalues, and the spatial
    // round-trip normalisation
    space_eig: Vec<f64>,
    space_norm: f64,
}

impl std::fmt::Debug for HelmholtzSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HelmholtzSolver")
            .field("shape", &self.shape)
            .finish_non_exhaustive()
    }
}

impl HelmholtzSolver {
    pub fn build(grid: &Grid) -> Result<Self> {
        // Grid construction already enforces at least 3 points per axis.
        let (nt, nx, ny) = grid.shape();
        let shape = [nt, nx, ny];
        let mut dct = DctPlanner::new();
        let mut fft = FftPlanner::new();

        let mut plans = [AxisPlan::Trivial, AxisPlan::Trivial, AxisPlan::Trivial];
        let mut eig: [Vec<f64>; 3] = [vec![0.0], vec![0.0], vec![0.0]];
        let mut norm = 1.0;

        plans[0] = AxisPlan::Cosine(dct.plan_dct2(nt));
        eig[0] = axis_eigenvalues(nt, grid.dt(), false);

        for (d, ax) in grid.axes().iter().enumerate() {
            let n = ax.points;
            match ax.boundary {
                Boundary::Periodic => {
                    plans[d + 1] = AxisPlan::Fourier {
                        forward: fft.plan_fft_forward(n),
                        inverse: fft.plan_fft_inverse(n),
                    };
                    eig[d + 1] = axis_eigenvalues(n, ax.spacing(), true);
                    norm /= n as f64;
                }
                Boundary::Neumann => {
                    plans[d + 1] = AxisPlan::Cosine(dct.plan_dct2(n));
                    eig[d + 1] = axis_eigenvalues(n, ax.spacing(), false);
                    norm *= 2.0 / n as f64;
                }
            }
        }

        let space_norm = norm;
        norm *= 2.0 / nt as f64;
        let mut space_eig = Vec::with_capacity(nx * ny);
        for lx in &eig[1] {
            for ly in &eig[2] {
                space_eig.push(lx + ly);
            }
        }

        let mut symbol = Vec::with_capacity(nt * nx * ny);
        for lt in &eig[0] {
            for lx in &eig[1] {
                for ly in &eig[2] {
                    symbol.push(1.0 / (1.0 + lt + lx + ly));
                }
            }
        }
        let scaled = symbol.iter().map(|s| s * norm).collect();
        Ok(HelmholtzSolver {
            grid: grid.clone(),
            shape,
            plans,
            symbol,
            scaled,
            space_eig,
            space_norm,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Multipliers `1 / (1 + lambda_t + sum lambda_d)` in transform order.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn apply(&self, residual: &Field) -> Result<Field> {
        residual.check_grid(&self.grid)?;
        let mut out = residual.clone();
        self.apply_in_place(out.as_slice_mut());
        Ok(out)
    }

    /// Overwrites `data` (time-major, grid shape) with `M^{-1} data`.
    pub(crate) fn apply_in_place(&self, data: &mut [f64]) {
        debug_assert_eq!(data.len(), self.symbol.len());
        if self.plans.iter().any(AxisPlan::is_fourier) {
            let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            for axis in 0..3 {
                self.transform_complex(&mut buf, axis, false);
            }
            buf.par_iter_mut()
                .zip(self.scaled.par_iter())
                .for_each(|(z, s)| *z *= s);
            for axis in (0..3).rev() {
                self.transform_complex(&mut buf, axis, true);
            }
            for (v, z) in data.iter_mut().zip(buf) {
                *v = z.re;
            }
        } else {
            for axis in 0..3 {
                self.transform_real(data, axis, false);
            }
            data.par_iter_mut()
                .zip(self.scaled.par_iter())
                .for_each(|(v, s)| *v *= s);
            for axis in (0..3).rev() {
                self.transform_real(data, axis, true);
            }
        }
    }

    /// Overwrites `data` with the solution of `M u = data` on slices
    /// `k >= 1` when `u` is held at zero on the first slice. The first
    /// slice of `data` is ignored and comes back zero.
    pub(crate) fn apply_pinned_in_place(&self, data: &mut [f64]) {
        debug_assert_eq!(data.len(), self.symbol.len());
        if self.plans[1..].iter().any(AxisPlan::is_fourier) {
            let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            for axis in 1..3 {
                self.transform_complex(&mut buf, axis, false);
            }
            self.pinned_time_solve(&mut buf);
            for axis in (1..3).rev() {
                self.transform_complex(&mut buf, axis, true);
            }
            for (v, z) in data.iter_mut().zip(buf) {
                *v = z.re;
            }
        } else {
            for axis in 1..3 {
                self.transform_real(data, axis, false);
            }
            self.pinned_time_solve(data);
            for axis in (1..3).rev() {
                self.transform_real(data, axis, true);
            }
        }
    }

    /// Tridiagonal solve along time for every spatial mode: Dirichlet row
    /// zero, reflected ghost past the last slice.
    fn pinned_time_solve<T>(&self, data: &mut [T])
    where
        T: Copy
            + Send
            + Sync
            + Default
            + std::ops::Sub<Output = T>
            + std::ops::Mul<f64, Output = T>,
    {
        let [nt, nx, ny] = self.shape;
        let sl = nx * ny;
        let w = 1.0 / (self.grid.dt() * self.grid.dt());
        let mut cols = vec![T::default(); data.len()];
        for k in 0..nt {
            for s in 0..sl {
                cols[s * nt + k] = data[k * sl + s];
            }
        }
        cols.par_chunks_mut(nt).enumerate().for_each(|(s, col)| {
            let base = 1.0 + self.space_eig[s];
            let m = nt - 1;
            // Thomas algorithm on rows 1..nt, forward sweep
            let mut c = vec![0.0; m];
            let mut prev_c = 0.0;
            for r in 0..m {
                let diag = base + if r + 1 == m { w } else { 2.0 * w };
                let denom = diag + w * prev_c;
                c[r] = -w / denom;
                let rhs = if r == 0 {
                    col[1]
                } else {
                    col[r + 1] - col[r] * (-w)
                };
                col[r + 1] = rhs * (1.0 / denom);
                prev_c = c[r];
            }
            for r in (0..m - 1).rev() {
                col[r + 1] = col[r + 1] - col[r + 2] * c[r];
            }
            col[0] = T::default();
            for v in col.iter_mut() {
                *v = *v * self.space_norm;
            }
        });
        for k in 0..nt {
            for s in 0..sl {
                data[k * sl + s] = cols[s * nt + k];
            }
        }
    }

    fn transform_real(&self, data: &mut [f64], axis: usize, inverse: bool) {
        let AxisPlan::Cosine(plan) = &self.plans[axis] else {
            return;
        };
        for_each_line(data, self.shape, axis, |line| {
            if inverse {
                plan.process_dct3(line);
            } else {
                plan.process_dct2(line);
            }
        });
    }

    fn transform_complex(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        match &self.plans[axis] {
            AxisPlan::Trivial => {}
            AxisPlan::Cosine(plan) => {
                let n = self.shape[axis];
                for_each_line(data, self.shape, axis, |line| {
                    let mut re: Vec<f64> = line.iter().map(|z| z.re).collect();
                    let mut im: Vec<f64> = line.iter().map(|z| z.im).collect();
                    if inverse {
                        plan.process_dct3(&mut re);
                        plan.process_dct3(&mut im);
                    } else {
                        plan.process_dct2(&mut re);
                        plan.process_dct2(&mut im);
                    }
                    for p in 0..n {
                        line[p] = Complex64::new(re[p], im[p]);
                    }
                });
            }
            AxisPlan::Fourier {
                forward,
                inverse: inv,
            } => {
                let plan = if inverse { inv } else { forward };
                for_each_line(data, self.shape, axis, |line| plan.process(line));
            }
        }
    }
}

/// Runs `f` on every line of `data` along `axis`. Non-contiguous lines are
/// gathered into a scratch buffer and scattered back.
fn for_each_line<T, F>(data: &mut [T], shape: [usize; 3], axis: usize, f: F)
where
    T: Copy + Send + Sync,
    F: Fn(&mut [T]) + Sync,
{
    let n = shape[axis];
    if n == 1 {
        return;
    }
    let stride: usize = shape[axis + 1..].iter().product();
    if stride == 1 {
        data.par_chunks_mut(n).for_each(&f);
        return;
    }
    let mut scratch: Vec<T> = vec![data[0]; data.len()];
    {
        let src = &*data;
        scratch
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(line, buf)| {
                let outer = line / stride;
                let inner = line % stride;
                let base = outer * n * stride + inner;
                for (p, slot) in buf.iter_mut().enumerate() {
                    *slot = src[base + p * stride];
                }
                f(buf);
            });
    }
    for (line, buf) in scratch.chunks(n).enumerate() {
        let outer = line / stride;
        let inner = line % stride;
        let base = outer * n * stride + inner;
        for (p, v) in buf.iter().enumerate() {
            data[base + p * stride] = *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpatialAxis;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Dense `M = I - D_tt - sum D_dd` with reflected ghosts on time and
    /// Neumann axes and wrap-around on periodic ones.
    pub(crate) fn assemble(grid: &Grid) -> Vec<Vec<f64>> {
        let (nt, nx, ny) = grid.shape();
        let n = nt * nx * ny;
        let idx = |k: usize, i: usize, j: usize| (k * nx + i) * ny + j;
        let mut m = vec![vec![0.0; n]; n];
        let dt2 = grid.dt() * grid.dt();
        for k in 0..nt {
            for i in 0..nx {
                for j in 0..ny {
                    let r = idx(k, i, j);
                    m[r][r] += 1.0;
                    let kp = (k + 1).min(nt - 1);
                    let km = k.saturating_sub(1);
                    m[r][r] += 2.0 / dt2;
                    m[r][idx(kp, i, j)] -= 1.0 / dt2;
                    m[r][idx(km, i, j)] -= 1.0 / dt2;
                    for (d, ax) in grid.axes().iter().enumerate() {
                        let h2 = ax.spacing() * ax.spacing();
                        let pos = if d == 0 { i } else { j };
                        let (p, q) = (ax.next(pos), ax.prev(pos));
                        let (cp, cq) = if d == 0 {
                            (idx(k, p, j), idx(k, q, j))
                        } else {
                            (idx(k, i, p), idx(k, i, q))
                        };
                        m[r][r] += 2.0 / h2;
                        m[r][cp] -= 1.0 / h2;
                        m[r][cq] -= 1.0 / h2;
                    }
                }
            }
        }
        m
    }

    fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
        m.iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn grid3(nt: usize, nx: usize, bx: Boundary, ny: Option<(usize, Boundary)>) -> Grid {
        let mut axes = vec![SpatialAxis::new(0.0, 2.0, nx, bx)];
        if let Some((n, b)) = ny {
            axes.push(SpatialAxis::new(-1.0, 1.0, n, b));
        }
        Grid::new(axes, nt, 1.3).unwrap()
    }

    #[test]
    fn dct_round_trip_scaling() {
        let mut planner = DctPlanner::new();
        let plan = planner.plan_dct2(7);
        let x: Vec<f64> = (0..7).map(|i| (i as f64 * 0.7).sin() + 0.1).collect();
        let mut y = x.clone();
        plan.process_dct2(&mut y);
        plan.process_dct3(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert_abs_diff_eq!(*a, b * 2.0 / 7.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn eigenvalue_examples() {
        let e = axis_eigenvalues(4, 0.5, true);
        for (a, b) in e.iter().zip([0.0, 8.0, 16.0, 8.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        // reflected-ghost second difference on 3 points, unit spacing
        let e = axis_eigenvalues(3, 1.0, false);
        for (a, b) in e.iter().zip([0.0, 1.0, 3.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn reflected_spectrum_matches_dense_matrix() {
        // [[1,-1,0],[-1,2,-1],[0,-1,1]] has eigenvalues 0, 1, 3
        let m = [[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        for (k, lam) in axis_eigenvalues(3, 1.0, false).into_iter().enumerate() {
            let v: Vec<f64> = (0..3)
                .map(|i| (PI * k as f64 * (i as f64 + 0.5) / 3.0).cos())
                .collect();
            for i in 0..3 {
                let mv: f64 = (0..3).map(|j| m[i][j] * v[j]).sum();
                assert_abs_diff_eq!(mv, lam * v[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn symbol_range_and_constant_mode() {
        let g = grid3(5, 6, Boundary::Periodic, Some((4, Boundary::Neumann)));
        let s = HelmholtzSolver::build(&g).unwrap();
        assert_eq!(s.symbol()[0], 1.0);
        assert!(s.symbol().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn constants_and_zero_pass_through() {
        let g = grid3(6, 8, Boundary::Periodic, None);
        let s = HelmholtzSolver::build(&g).unwrap();
        let out = s.apply(&Field::constant(&g, 1.0)).unwrap();
        assert!(out.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-13));
        let out = s.apply(&Field::zeros(&g)).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_fourier_mode_is_scaled() {
        let g = Grid::one_d(0.0, 2.0, 4, Boundary::Periodic, 5, 1.0).unwrap();
        let s = HelmholtzSolver::build(&g).unwrap();
        let r = Field::from_fn(&g, |_, x| (PI * x[0]).cos());
        let out = s.apply(&r).unwrap();
        // oracle: dense solve via the assembled operator
        let m = assemble(&g);
        let back = matvec(&m, out.as_slice());
        for (a, b) in back.iter().zip(r.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in out.as_slice().iter().zip(r.as_slice()) {
            assert_abs_diff_eq!(*a, b / 9.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn round_trip_on_mixed_grids() {
        let cases = [
            grid3(12, 12, Boundary::Periodic, Some((12, Boundary::Periodic))),
            grid3(12, 12, Boundary::Neumann, Some((12, Boundary::Periodic))),
            grid3(7, 5, Boundary::Neumann, Some((6, Boundary::Neumann))),
            grid3(9, 10, Boundary::Neumann, None),
        ];
        for g in cases {
            let s = HelmholtzSolver::build(&g).unwrap();
            let m = assemble(&g);
            let r = Field::from_fn(&g, |k, x| (1.3 * x[0] - 0.2 * k as f64).sin() + x[1] * x[1]);
            let out = s.apply(&r).unwrap();
            let back = matvec(&m, out.as_slice());
            for (a, b) in back.iter().zip(r.as_slice()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn pinned_solve_matches_dense_submatrix() {
        let cases = [
            grid3(6, 8, Boundary::Periodic, None),
            grid3(5, 5, Boundary::Neumann, Some((4, Boundary::Periodic))),
            grid3(3, 4, Boundary::Neumann, Some((3, Boundary::Neumann))),
        ];
        for g in cases {
            let s = HelmholtzSolver::build(&g).unwrap();
            let m = assemble(&g);
            let sl = g.slice_len();
            let r = Field::from_fn(&g, |k, x| (0.9 * x[0] + 0.4 * k as f64).cos() - x[1]);
            let mut u = r.as_slice().to_vec();
            s.apply_pinned_in_place(&mut u);
            assert!(u[..sl].iter().all(|&v| v == 0.0));
            // u vanishes on the first slice, so M u restricted to k >= 1 is
            // the pinned operator applied to u
            let back = matvec(&m, &u);
            for (a, b) in back[sl..].iter().zip(&r.as_slice()[sl..]) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn linear_and_positive(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            seed in proptest::collection::vec(-1.0f64..1.0, 2 * 5 * 6 * 4),
        ) {
            let g = grid3(5, 6, Boundary::Periodic, Some((4, Boundary::Neumann)));
            let s = HelmholtzSolver::build(&g).unwrap();
            let n = g.len();
            let r1 = Field::from_values(&g, ndarray::Array3::from_shape_vec(g.shape(), seed[..n].to_vec()).unwrap()).unwrap();
            let r2 = Field::from_values(&g, ndarray::Array3::from_shape_vec(g.shape(), seed[n..].to_vec()).unwrap()).unwrap();
            let mut comb = r1.clone();
            for (c, v) in comb.as_slice_mut().iter_mut().zip(r2.as_slice()) {
                *c = a * *c + b * v;
            }
            let lhs = s.apply(&comb).unwrap();
            let u1 = s.apply(&r1).unwrap();
            let u2 = s.apply(&r2).unwrap();
            for ((l, x), y) in lhs.as_slice().iter().zip(u1.as_slice()).zip(u2.as_slice()) {
                prop_assert!((l - (a * x + b * y)).abs() <= 1e-12);
            }
            let inner: f64 = u1.as_slice().iter().zip(r1.as_slice()).map(|(x, y)| x * y).sum();
            prop_assert!(inner >= -1e-14);
        }
    }
}
