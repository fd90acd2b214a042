//! Uniform space-time grids and the finite-difference operators used by the
//! solver.
//!
//! Fields are stored time-major as `(n_t, n_x, n_y)` arrays; one-dimensional
//! grids use `n_y = 1`. Periodic axes exclude the right endpoint, Neumann axes
//! include both endpoints and use reflected ghost values equal to the boundary
//! value, so one-sided differences across a Neumann boundary vanish.

use ndarray::{Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Neumann,
}

/// One spatial axis `[lower, upper]` sampled with `points` nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialAxis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    pub boundary: Boundary,
}

impl SpatialAxis {
    pub fn new(lower: f64, upper: f64, points: usize, boundary: Boundary) -> Self {
        SpatialAxis {
            lower,
            upper,
            points,
            boundary,
        }
    }

    pub fn spacing(&self) -> f64 {
        match self.boundary {
            Boundary::Periodic => (self.upper - self.lower) / self.points as f64,
            Boundary::Neumann => (self.upper - self.lower) / (self.points - 1) as f64,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lower + i as f64 * self.spacing()
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    /// Maps a coordinate into the axis: wraps periodic axes into
    /// `[lower, upper)` and clamps Neumann axes to `[lower, upper]`.
    pub fn fold(&self, x: f64) -> f64 {
        match self.boundary {
            Boundary::Periodic => {
                let y = (x - self.lower).rem_euclid(self.length()) + self.lower;
                // rem_euclid can round up to the period itself
                if y >= self.upper {
                    self.lower
                } else {
                    y
                }
            }
            Boundary::Neumann => x.clamp(self.lower, self.upper),
        }
    }

    /// Index of the next node, with the reflected ghost on Neumann axes.
    pub(crate) fn next(&self, i: usize) -> usize {
        match self.boundary {
            Boundary::Periodic => (i + 1) % self.points,
            Boundary::Neumann => (i + 1).min(self.points - 1),
        }
    }

    pub(crate) fn prev(&self, i: usize) -> usize {
        match self.boundary {
            Boundary::Periodic => (i + self.points - 1) % self.points,
            Boundary::Neumann => i.saturating_sub(1),
        }
    }
}

/// Uniform space-time lattice over `domain x [0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    axes: Vec<SpatialAxis>,
    n_t: usize,
    horizon: f64,
}

impl Grid {
    pub fn new(axes: Vec<SpatialAxis>, n_t: usize, horizon: f64) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "expected 1 or 2 spatial axes, got {}",
                axes.len()
            )));
        }
        for (d, ax) in axes.iter().enumerate() {
            if ax.points < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {d} has {} points, need at least 3",
                    ax.points
                )));
            }
            if !(ax.lower.is_finite() && ax.upper.is_finite() && ax.lower < ax.upper) {
                return Err(Error::InvalidGrid(format!(
                    "axis {d} has invalid interval [{}, {}]",
                    ax.lower, ax.upper
                )));
            }
        }
        if n_t < 3 {
            return Err(Error::InvalidGrid(format!(
                "n_t = {n_t}, need at least 3 time points"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon {horizon} must be positive"
            )));
        }
        Ok(Grid { axes, n_t, horizon })
    }

    pub fn one_d(
        lower: f64,
        upper: f64,
        n_x: usize,
        boundary: Boundary,
        n_t: usize,
        horizon: f64,
    ) -> Result<Self> {
        Grid::new(
            vec![SpatialAxis::new(lower, upper, n_x, boundary)],
            n_t,
            horizon,
        )
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[SpatialAxis] {
        &self.axes
    }

    pub fn axis(&self, d: usize) -> Result<&SpatialAxis> {
        self.axes.get(d).ok_or(Error::InvalidAxis {
            axis: d,
            dims: self.dims(),
        })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_t - 1) as f64
    }

    /// Spacing of spatial axis `d`. Panics if `d` is out of range.
    pub fn dx(&self, d: usize) -> f64 {
        self.axes[d].spacing()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// `(n_t, n_x, n_y)` with `n_y = 1` in one dimension.
    pub fn shape(&self) -> (usize, usize, usize) {
        let nx = self.axes[0].points;
        let ny = self.axes.get(1).map_or(1, |a| a.points);
        (self.n_t, nx, ny)
    }

    /// Number of spatial nodes per time slice.
    pub fn slice_len(&self) -> usize {
        let (_, nx, ny) = self.shape();
        nx * ny
    }

    pub fn len(&self) -> usize {
        self.n_t * self.slice_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spatial coordinates of node `(i, j)`; the second entry is unused in 1D.
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        let x = self.axes[0].coord(i);
        let y = self.axes.get(1).map_or(0.0, |a| a.coord(j));
        [x, y]
    }

    /// Volume element `dt * prod(dx)`.
    pub fn cell_volume(&self) -> f64 {
        self.axes
            .iter()
            .fold(self.dt(), |acc, ax| acc * ax.spacing())
    }

    /// Same spatial axes over a different time lattice.
    pub fn with_time(&self, n_t: usize, horizon: f64) -> Result<Grid> {
        Grid::new(self.axes.clone(), n_t, horizon)
    }

    pub(crate) fn stencil(&self) -> Stencil {
        Stencil::new(self)
    }
}

/// A real array over a grid, indexed `(k, i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Array3<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Field {
            grid: grid.clone(),
            values: Array3::zeros(grid.shape()),
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Field {
            grid: grid.clone(),
            values: Array3::from_elem(grid.shape(), value),
        }
    }

    /// Builds a field from `f(k, point)`.
    pub fn from_fn(grid: &Grid, f: impl Fn(usize, [f64; 2]) -> f64) -> Self {
        let values = Array3::from_shape_fn(grid.shape(), |(k, i, j)| f(k, grid.point(i, j)));
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Grid, values: Array3<f64>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(Error::ShapeMismatch {
                expected: grid.shape(),
                actual: values.dim(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("values", "field entries must be finite"));
        }
        // standard layout is assumed by the slice kernels
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().into_owned()
        };
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array3<f64> {
        self.values
    }

    pub fn at(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[[k, i, j]]
    }

    pub fn time_slice(&self, k: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(ndarray::Axis(0), k)
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values
            .as_slice()
            .expect("fields are always in standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        self.values
            .as_slice_mut()
            .expect("fields are always in standard layout")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid.shape() != grid.shape() {
            return Err(Error::ShapeMismatch {
                expected: grid.shape(),
                actual: self.grid.shape(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceScheme {
    Forward,
    Backward,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeScheme {
    Backward,
    Forward,
    Second,
}

/// Applies a spatial difference operator along `axis`.
pub fn diff_space(field: &Field, axis: usize, scheme: SpaceScheme) -> Result<Field> {
    let grid = field.grid();
    grid.axis(axis)?;
    let stencil = grid.stencil();
    let mut out = Field::zeros(grid);
    let src = field.as_slice();
    let dst = out.as_slice_mut();
    match scheme {
        SpaceScheme::Forward => stencil.forward(src, axis, dst),
        SpaceScheme::Backward => stencil.backward(src, axis, dst),
        SpaceScheme::Second => stencil.second(src, axis, dst),
    }
    Ok(out)
}

/// Applies a time difference operator. Backward differences are zero on the
/// first slice and forward differences on the last; the second difference
/// reflects at both ends.
pub fn diff_time(field: &Field, scheme: TimeScheme) -> Result<Field> {
    let grid = field.grid();
    let stencil = grid.stencil();
    let mut out = Field::zeros(grid);
    let src = field.as_slice();
    let dst = out.as_slice_mut();
    match scheme {
        TimeScheme::Backward => stencil.time_backward(src, dst),
        TimeScheme::Forward => stencil.time_forward(src, None, dst),
        TimeScheme::Second => stencil.time_second(src, dst),
    }
    Ok(out)
}

/// Transposes of the one-sided difference operators, as used in the
/// divergence form of the continuity equation. On periodic axes the
/// transpose of `D+` is `-D-` and vice versa; on Neumann axes the boundary
/// rows differ.
pub fn diff_space_adjoint(field: &Field, axis: usize, scheme: SpaceScheme) -> Result<Field> {
    let grid = field.grid();
    grid.axis(axis)?;
    let stencil = grid.stencil();
    let mut out = Field::zeros(grid);
    let src = field.as_slice();
    let dst = out.as_slice_mut();
    match scheme {
        SpaceScheme::Forward => stencil.forward_adjoint(src, axis, dst),
        SpaceScheme::Backward => stencil.backward_adjoint(src, axis, dst),
        SpaceScheme::Second => stencil.second(src, axis, dst),
    }
    Ok(out)
}

/// Precomputed neighbour tables for the slice kernels.
#[derive(Clone, Debug)]
pub(crate) struct Stencil {
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
    pub dt: f64,
    h: [f64; 2],
    next: [Vec<usize>; 2],
    prev: [Vec<usize>; 2],
    // whether D+ (resp. D-) at node i involves a genuine neighbour
    fwd_live: [Vec<bool>; 2],
    bwd_live: [Vec<bool>; 2],
}

impl Stencil {
    fn new(grid: &Grid) -> Self {
        let (nt, nx, ny) = grid.shape();
        let mut h = [1.0; 2];
        let mut next: [Vec<usize>; 2] = [vec![0], vec![0]];
        let mut prev: [Vec<usize>; 2] = [vec![0], vec![0]];
        let mut fwd_live: [Vec<bool>; 2] = [vec![false], vec![false]];
        let mut bwd_live: [Vec<bool>; 2] = [vec![false], vec![false]];
        for (d, ax) in grid.axes().iter().enumerate() {
            h[d] = ax.spacing();
            next[d] = (0..ax.points).map(|i| ax.next(i)).collect();
            prev[d] = (0..ax.points).map(|i| ax.prev(i)).collect();
            fwd_live[d] = (0..ax.points).map(|i| ax.next(i) != i).collect();
            bwd_live[d] = (0..ax.points).map(|i| ax.prev(i) != i).collect();
        }
        Stencil {
            nt,
            nx,
            ny,
            dt: grid.dt(),
            h,
            next,
            prev,
            fwd_live,
            bwd_live,
        }
    }

    #[inline]
    pub fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    /// Flat index offset of the `+1` neighbour of spatial node `(i, j)`.
    #[inline]
    pub fn plus(&self, axis: usize, i: usize, j: usize) -> usize {
        if axis == 0 {
            self.next[0][i] * self.ny + j
        } else {
            i * self.ny + self.next[1][j]
        }
    }

    #[inline]
    pub fn minus(&self, axis: usize, i: usize, j: usize) -> usize {
        if axis == 0 {
            self.prev[0][i] * self.ny + j
        } else {
            i * self.ny + self.prev[1][j]
        }
    }

    #[inline]
    fn along(&self, axis: usize, i: usize, j: usize) -> usize {
        if axis == 0 {
            i
        } else {
            j
        }
    }

    #[inline]
    pub fn fwd_live(&self, axis: usize, i: usize, j: usize) -> bool {
        self.fwd_live[axis][self.along(axis, i, j)]
    }

    #[inline]
    pub fn bwd_live(&self, axis: usize, i: usize, j: usize) -> bool {
        self.bwd_live[axis][self.along(axis, i, j)]
    }

    fn for_each_node(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let sl = self.slice_len();
        for k in 0..self.nt {
            for i in 0..self.nx {
                for j in 0..self.ny {
                    f(k * sl, i, j, i * self.ny + j);
                }
            }
        }
    }

    pub fn forward(&self, src: &[f64], axis: usize, dst: &mut [f64]) {
        let inv = 1.0 / self.h[axis];
        self.for_each_node(|base, i, j, s| {
            dst[base + s] = (src[base + self.plus(axis, i, j)] - src[base + s]) * inv;
        });
    }

    pub fn backward(&self, src: &[f64], axis: usize, dst: &mut [f64]) {
        let inv = 1.0 / self.h[axis];
        self.for_each_node(|base, i, j, s| {
            dst[base + s] = (src[base + s] - src[base + self.minus(axis, i, j)]) * inv;
        });
    }

    pub fn second(&self, src: &[f64], axis: usize, dst: &mut [f64]) {
        let inv = 1.0 / (self.h[axis] * self.h[axis]);
        self.for_each_node(|base, i, j, s| {
            dst[base + s] = (src[base + self.plus(axis, i, j)]
                + src[base + self.minus(axis, i, j)]
                - 2.0 * src[base + s])
                * inv;
        });
    }

    /// `(D+)^T`: `(w_{i-1} u_{i-1} - w_i u_i) / h` with `w` the live mask.
    pub fn forward_adjoint(&self, src: &[f64], axis: usize, dst: &mut [f64]) {
        let inv = 1.0 / self.h[axis];
        self.for_each_node(|base, i, j, s| {
            let own = if self.fwd_live(axis, i, j) {
                src[base + s]
            } else {
                0.0
            };
            let m = self.minus(axis, i, j);
            let left = if self.bwd_live(axis, i, j) {
                src[base + m]
            } else {
                0.0
            };
            dst[base + s] = (left - own) * inv;
        });
    }

    /// `(D-)^T`: `(w_i u_i - w_{i+1} u_{i+1}) / h`.
    pub fn backward_adjoint(&self, src: &[f64], axis: usize, dst: &mut [f64]) {
        let inv = 1.0 / self.h[axis];
        self.for_each_node(|base, i, j, s| {
            let own = if self.bwd_live(axis, i, j) {
                src[base + s]
            } else {
                0.0
            };
            let p = self.plus(axis, i, j);
            let right = if self.fwd_live(axis, i, j) {
                src[base + p]
            } else {
                0.0
            };
            dst[base + s] = (own - right) * inv;
        });
    }

    pub fn time_backward(&self, src: &[f64], dst: &mut [f64]) {
        let sl = self.slice_len();
        let inv = 1.0 / self.dt;
        dst[..sl].fill(0.0);
        for n in sl..self.nt * sl {
            dst[n] = (src[n] - src[n - sl]) * inv;
        }
    }

    /// Forward difference; the last slice uses `ghost` as the value past the
    /// end when given, otherwise it is set to zero.
    pub fn time_forward(&self, src: &[f64], ghost: Option<f64>, dst: &mut [f64]) {
        let sl = self.slice_len();
        let inv = 1.0 / self.dt;
        let last = (self.nt - 1) * sl;
        for n in 0..last {
            dst[n] = (src[n + sl] - src[n]) * inv;
        }
        for n in last..last + sl {
            dst[n] = match ghost {
                Some(g) => (g - src[n]) * inv,
                None => 0.0,
            };
        }
    }

    pub fn time_second(&self, src: &[f64], dst: &mut [f64]) {
        let sl = self.slice_len();
        let inv = 1.0 / (self.dt * self.dt);
        for k in 0..self.nt {
            let kp = (k + 1).min(self.nt - 1);
            let km = k.saturating_sub(1);
            for s in 0..sl {
                dst[k * sl + s] =
                    (src[kp * sl + s] + src[km * sl + s] - 2.0 * src[k * sl + s]) * inv;
            }
        }
    }
}
