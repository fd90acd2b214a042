//! Control problem definition: affine dynamics, running cost, terminal cost
//! and diffusion, together with the continuous and upwind Hamiltonians.
//!
//! Time conventions: the value function is solved forward in `t`, while the
//! dynamics and costs are defined in physical time `s = T - t`. Every method
//! taking `t` performs that reversal internally.

mod checks;
mod prox;

pub use checks::{
    check_consistency, check_consistency_with, check_monotonicity, check_monotonicity_with,
    ConsistencyReport, MonotonicityReport, SamplePoint, DEFAULT_P_MAX,
};
pub use prox::{prox_alpha, prox_scalar, BranchInterval, RHO_FLOOR};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Upwind branch of a control slot. `Up` slots push the state towards the
/// forward neighbour and pair with the forward difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Up,
    Down,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Up, Branch::Down];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Up => "up",
            Branch::Down => "down",
        }
    }
}

/// Named coefficient functions of `(x, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coefficient {
    Zero,
    Constant {
        value: f64,
    },
    /// `scale * ((x[axis] - center)^2 + floor)`
    Well {
        axis: usize,
        center: f64,
        floor: f64,
        scale: f64,
    },
    /// `scale * x[axis]`
    State {
        axis: usize,
        scale: f64,
    },
}

impl Coefficient {
    pub fn eval(&self, x: [f64; 2], _s: f64) -> f64 {
        match *self {
            Coefficient::Zero => 0.0,
            Coefficient::Constant { value } => value,
            Coefficient::Well {
                axis,
                center,
                floor,
                scale,
            } => {
                let d = x[axis] - center;
                scale * (d * d + floor)
            }
            Coefficient::State { axis, scale } => scale * x[axis],
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Coefficient::Zero => true,
            Coefficient::Constant { value } => value == 0.0,
            Coefficient::Well { scale, .. } | Coefficient::State { scale, .. } => scale == 0.0,
        }
    }

    fn validate(&self, dims: usize, path: &str) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidProblem(format!(
                    "{path}.{name} must be finite"
                )))
            }
        };
        let axis_ok = |axis: usize| {
            if axis < dims {
                Ok(())
            } else {
                Err(Error::InvalidProblem(format!(
                    "{path}.axis = {axis} out of range for {dims} dimension(s)"
                )))
            }
        };
        match *self {
            Coefficient::Zero => Ok(()),
            Coefficient::Constant { value } => finite("value", value),
            Coefficient::Well {
                axis,
                center,
                floor,
                scale,
            } => {
                axis_ok(axis)?;
                finite("center", center)?;
                finite("floor", floor)?;
                finite("scale", scale)
            }
            Coefficient::State { axis, scale } => {
                axis_ok(axis)?;
                finite("scale", scale)
            }
        }
    }
}

/// Dynamics of one state component: `f_d = a(x, s) * alpha_d + b(x, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisDynamics {
    pub a: Coefficient,
    pub b: Coefficient,
}

impl AxisDynamics {
    pub fn control_dependent(&self) -> bool {
        !self.a.is_zero()
    }
}

/// Diagonal affine dynamics, one entry per spatial dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineDynamics {
    pub axes: Vec<AxisDynamics>,
}

impl AffineDynamics {
    /// `f_d = -((x_d - 1)^2 + 0.1) alpha_d` in every dimension.
    pub fn quadratic_xdep(dims: usize) -> Self {
        AffineDynamics {
            axes: (0..dims)
                .map(|d| AxisDynamics {
                    a: Coefficient::Well {
                        axis: d,
                        center: 1.0,
                        floor: 0.1,
                        scale: -1.0,
                    },
                    b: Coefficient::Zero,
                })
                .collect(),
        }
    }

    /// Double integrator: `f = [alpha, x_1]`; the first axis is velocity,
    /// the second position.
    pub fn newton() -> Self {
        AffineDynamics {
            axes: vec![
                AxisDynamics {
                    a: Coefficient::Constant { value: 1.0 },
                    b: Coefficient::Zero,
                },
                AxisDynamics {
                    a: Coefficient::Zero,
                    b: Coefficient::State {
                        axis: 0,
                        scale: 1.0,
                    },
                },
            ],
        }
    }

    pub fn zero(dims: usize) -> Self {
        AffineDynamics {
            axes: (0..dims)
                .map(|_| AxisDynamics {
                    a: Coefficient::Zero,
                    b: Coefficient::Zero,
                })
                .collect(),
        }
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    /// `(a_d, b_d)` at physical time `s`.
    pub fn coefficients(&self, d: usize, x: [f64; 2], s: f64) -> (f64, f64) {
        let ax = &self.axes[d];
        (ax.a.eval(x, s), ax.b.eval(x, s))
    }

    pub fn velocity(&self, x: [f64; 2], s: f64, alpha: [f64; 2]) -> [f64; 2] {
        let mut f = [0.0; 2];
        for (d, out) in f.iter_mut().enumerate().take(self.dims()) {
            let (a, b) = self.coefficients(d, x, s);
            *out = a * alpha[d] + b;
        }
        f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Lagrangian {
    /// `(weight / 2) alpha^2`
    Quadratic {
        #[serde(default = "unit")]
        weight: f64,
    },
    /// Zero on `|alpha| <= radius`, infinite outside.
    #[serde(alias = "box")]
    BoxIndicator {
        #[serde(default = "unit")]
        radius: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl Lagrangian {
    pub fn value(&self, alpha: f64) -> f64 {
        match *self {
            Lagrangian::Quadratic { weight } => 0.5 * weight * alpha * alpha,
            Lagrangian::BoxIndicator { radius } => {
                if alpha.abs() <= radius {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Convex conjugate `L*(q) = sup_a { a q - L(a) }`.
    #[inline]
    pub fn conjugate(&self, q: f64) -> f64 {
        match *self {
            Lagrangian::Quadratic { weight } => 0.5 * q * q / weight,
            Lagrangian::BoxIndicator { radius } => radius * q.abs(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Lagrangian::Quadratic { weight } if !(weight.is_finite() && weight > 0.0) => Err(
                Error::InvalidProblem(format!("quadratic weight {weight} must be positive")),
            ),
            Lagrangian::BoxIndicator { radius } if !(radius.is_finite() && radius > 0.0) => Err(
                Error::InvalidProblem(format!("box radius {radius} must be positive")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalCost {
    /// `sum_d sin(pi x_d)`
    SinPi,
    /// `exp(-x_1^2 / 2) sin(pi x_2)`
    GaussSin,
    Constant {
        value: f64,
    },
}

impl TerminalCost {
    pub fn eval(&self, x: [f64; 2], dims: usize) -> f64 {
        use std::f64::consts::PI;
        match *self {
            TerminalCost::SinPi => x[..dims].iter().map(|v| (PI * v).sin()).sum(),
            TerminalCost::GaussSin => (-0.5 * x[0] * x[0]).exp() * (PI * x[1]).sin(),
            TerminalCost::Constant { value } => value,
        }
    }
}

/// A control problem on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlProblem {
    grid: Grid,
    dynamics: AffineDynamics,
    lagrangian: Lagrangian,
    terminal_cost: TerminalCost,
    epsilon: f64,
}

impl ControlProblem {
    pub fn new(
        grid: Grid,
        dynamics: AffineDynamics,
        lagrangian: Lagrangian,
        terminal_cost: TerminalCost,
        epsilon: f64,
    ) -> Result<Self> {
        let dims = grid.dims();
        if dynamics.dims() != dims {
            return Err(Error::InvalidProblem(format!(
                "dynamics has {} component(s) but the grid has {dims} dimension(s)",
                dynamics.dims()
            )));
        }
        for (d, ax) in dynamics.axes.iter().enumerate() {
            ax.a.validate(dims, &format!("dynamics.axes[{d}].a"))?;
            ax.b.validate(dims, &format!("dynamics.axes[{d}].b"))?;
        }
        lagrangian.validate()?;
        if matches!(terminal_cost, TerminalCost::GaussSin) && dims != 2 {
            return Err(Error::InvalidProblem(
                "terminal cost gauss_sin needs a 2-dimensional grid".into(),
            ));
        }
        if let TerminalCost::Constant { value } = terminal_cost {
            if !value.is_finite() {
                return Err(Error::InvalidProblem(
                    "terminal cost value must be finite".into(),
                ));
            }
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidProblem(format!(
                "epsilon {epsilon} must be finite and non-negative"
            )));
        }
        Ok(ControlProblem {
            grid,
            dynamics,
            lagrangian,
            terminal_cost,
            epsilon,
        })
    }

    /// Quadratic cost with `f_d = -((x_d - 1)^2 + 0.1) alpha_d` and
    /// `g = sum sin(pi x_d)`.
    pub fn quadratic_xdep(grid: Grid, epsilon: f64) -> Result<Self> {
        let dims = grid.dims();
        ControlProblem::new(
            grid,
            AffineDynamics::quadratic_xdep(dims),
            Lagrangian::Quadratic { weight: 1.0 },
            TerminalCost::SinPi,
            epsilon,
        )
    }

    /// Same dynamics and terminal cost with controls constrained to
    /// `|alpha| <= 1` and no running cost.
    pub fn box_xdep(grid: Grid, epsilon: f64) -> Result<Self> {
        let dims = grid.dims();
        ControlProblem::new(
            grid,
            AffineDynamics::quadratic_xdep(dims),
            Lagrangian::BoxIndicator { radius: 1.0 },
            TerminalCost::SinPi,
            epsilon,
        )
    }

    pub fn newton(grid: Grid, epsilon: f64) -> Result<Self> {
        ControlProblem::new(
            grid,
            AffineDynamics::newton(),
            Lagrangian::Quadratic { weight: 1.0 },
            TerminalCost::GaussSin,
            epsilon,
        )
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.grid.dims()
    }

    pub fn dynamics(&self) -> &AffineDynamics {
        &self.dynamics
    }

    pub fn lagrangian(&self) -> &Lagrangian {
        &self.lagrangian
    }

    pub fn terminal_cost(&self) -> &TerminalCost {
        &self.terminal_cost
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_viscous(&self) -> bool {
        self.epsilon > 0.0
    }

    pub fn control_dependent(&self, d: usize) -> bool {
        self.dynamics.axes[d].control_dependent()
    }

    pub fn with_grid(&self, grid: Grid) -> Result<Self> {
        ControlProblem::new(
            grid,
            self.dynamics.clone(),
            self.lagrangian,
            self.terminal_cost.clone(),
            self.epsilon,
        )
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        ControlProblem::new(
            self.grid.clone(),
            self.dynamics.clone(),
            self.lagrangian,
            self.terminal_cost.clone(),
            epsilon,
        )
    }

    pub fn g(&self, x: [f64; 2]) -> f64 {
        self.terminal_cost.eval(x, self.dims())
    }

    /// `(a_d, b_d)` seen from solver time `t`.
    pub fn coefficients(&self, d: usize, x: [f64; 2], t: f64) -> (f64, f64) {
        self.dynamics.coefficients(d, x, self.grid.horizon() - t)
    }

    /// `H(x, t, p) = sum_d [ -b_d p_d + L*(-a_d p_d) ]`.
    pub fn hamiltonian(&self, x: [f64; 2], t: f64, p: [f64; 2]) -> f64 {
        (0..self.dims())
            .map(|d| {
                let (a, b) = self.coefficients(d, x, t);
                -b * p[d] + self.lagrangian.conjugate(a * p[d])
            })
            .sum()
    }

    /// Upwind numerical Hamiltonian with the sum-form numerical Lagrangian.
    pub fn numerical_hamiltonian(
        &self,
        x: [f64; 2],
        t: f64,
        p_up: [f64; 2],
        p_down: [f64; 2],
    ) -> f64 {
        (0..self.dims())
            .map(|d| {
                let (a, b) = self.coefficients(d, x, t);
                upwind_term(&self.lagrangian, a, b, p_up[d], p_down[d])
            })
            .sum()
    }
}

/// One dimension of the numerical Hamiltonian. The up slot maximises
/// `-(a alpha) p_up - L(alpha)` over `a alpha >= 0`, the down slot the same
/// with `p_down` over `a alpha <= 0`; the drift is upwinded by its sign.
#[inline]
pub(crate) fn upwind_term(lag: &Lagrangian, a: f64, b: f64, p_up: f64, p_down: f64) -> f64 {
    let drift = -b.max(0.0) * p_up - b.min(0.0) * p_down;
    drift + lag.conjugate(a * p_up.min(0.0)) + lag.conjugate(a * p_down.max(0.0))
}
