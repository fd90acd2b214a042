//! Closed-form proximal updates for the control slots.

use super::{Branch, ControlProblem, Lagrangian};
use crate::error::{Error, Result};

/// Smallest multiplier used as the proximal weight.
pub const RHO_FLOOR: f64 = 1e-6;

/// Feasible set of one control slot: `{alpha : a alpha >= 0}` for the up
/// branch, `{alpha : a alpha <= 0}` for the down branch, intersected with the
/// box for indicator costs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchInterval {
    pub lo: f64,
    pub hi: f64,
}

impl BranchInterval {
    pub fn new(lag: &Lagrangian, a: f64, branch: Branch) -> Self {
        let (mut lo, mut hi) = match (branch, a.partial_cmp(&0.0)) {
            (Branch::Up, Some(std::cmp::Ordering::Greater))
            | (Branch::Down, Some(std::cmp::Ordering::Less)) => (0.0, f64::INFINITY),
            (Branch::Up, Some(std::cmp::Ordering::Less))
            | (Branch::Down, Some(std::cmp::Ordering::Greater)) => (f64::NEG_INFINITY, 0.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        };
        if let Lagrangian::BoxIndicator { radius } = *lag {
            lo = lo.max(-radius);
            hi = hi.min(radius);
        }
        BranchInterval { lo, hi }
    }

    #[inline]
    pub fn project(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Minimiser over the branch interval of
/// `a alpha grad + L(alpha) + rho / (2 tau) (alpha - alpha_prev)^2`.
#[inline]
#[allow(clippy::too_many_arguments)]
pub fn prox_scalar(
    lag: &Lagrangian,
    a: f64,
    grad: f64,
    rho: f64,
    alpha_prev: f64,
    tau: f64,
    branch: Branch,
    rho_floor: f64,
) -> f64 {
    let rho = rho.max(rho_floor);
    let interval = BranchInterval::new(lag, a, branch);
    let free = match *lag {
        Lagrangian::Quadratic { weight } => {
            (rho * alpha_prev - tau * a * grad) / (rho + tau * weight)
        }
        Lagrangian::BoxIndicator { .. } => alpha_prev - tau * a * grad / rho,
    };
    interval.project(free)
}

/// Proximal update of the `branch` slot of dimension `axis` at `(x, t)`.
#[allow(clippy::too_many_arguments)]
pub fn prox_alpha(
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
    if !(tau_alpha.is_finite() && tau_alpha > 0.0) {
        return Err(Error::arg(
            "tau_alpha",
            format!("{tau_alpha} is not positive"),
        ));
    }
    if !(rho >= 0.0) {
        return Err(Error::arg("rho", format!("{rho} is negative")));
    }
    if axis >= problem.dims() {
        return Err(Error::InvalidAxis {
            axis,
            dims: problem.dims(),
        });
    }
    let (a, _) = problem.coefficients(axis, x, t);
    Ok(prox_scalar(
        problem.lagrangian(),
        a,
        grad,
        rho,
        alpha_prev,
        tau_alpha,
        branch,
        RHO_FLOOR,
    ))
}
