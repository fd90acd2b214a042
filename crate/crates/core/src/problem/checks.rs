//! Sampling checks of the numerical Hamiltonian: consistency with the exact
//! Hamiltonian on the diagonal and upwind monotonicity.

use serde::Serialize;

use super::ControlProblem;
use crate::error::{Error, Result};

/// Default half-width of the sampled gradient box.
pub const DEFAULT_P_MAX: f64 = 5.0;

const PROBE_STEP: f64 = 1e-3;
const PROBE_TOL: f64 = 1e-9;
const PRIMES: [u64; 7] = [2, 3, 5, 7, 11, 13, 17];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SamplePoint {
    pub x: [f64; 2],
    pub t: f64,
    pub p: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub max_deviation: f64,
    pub worst_point: SamplePoint,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub violations: usize,
    pub probes: usize,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Halton point `n` in `[0, 1)^7`.
fn halton(n: usize) -> [f64; 7] {
    let mut u = [0.0; 7];
    for (slot, &b) in u.iter_mut().zip(PRIMES.iter()) {
        *slot = radical_inverse(n as u64 + 1, b);
    }
    u
}

struct Sampler<'a> {
    problem: &'a ControlProblem,
    p_max: f64,
}

impl Sampler<'_> {
    /// Returns `(x, t, p, q)` with `p`, `q` two independent gradient draws.
    fn draw(&self, n: usize) -> ([f64; 2], f64, [f64; 2], [f64; 2]) {
        let u = halton(n);
        let grid = self.problem.grid();
        let mut x = [0.0; 2];
        for (d, ax) in grid.axes().iter().enumerate() {
            x[d] = ax.lower + u[d] * ax.length();
        }
        let t = u[2] * grid.horizon();
        let span = |v: f64| self.p_max * (2.0 * v - 1.0);
        let mut p = [0.0; 2];
        let mut q = [0.0; 2];
        for d in 0..grid.dims() {
            p[d] = span(u[3 + d]);
            q[d] = span(u[5 + d]);
        }
        (x, t, p, q)
    }
}

fn check_args(samples: usize, p_max: f64) -> Result<()> {
    if samples == 0 {
        return Err(Error::arg("sample_count", "must be at least 1"));
    }
    if !(p_max.is_finite() && p_max > 0.0) {
        return Err(Error::arg("p_max", format!("{p_max} is not positive")));
    }
    Ok(())
}

/// Largest `|H^(x, t, p, p) - H(x, t, p)|` over quasi-uniform samples.
pub fn check_consistency(problem: &ControlProblem, samples: usize) -> Result<ConsistencyReport> {
    check_consistency_with(problem, samples, DEFAULT_P_MAX, |x, t, pu, pd| {
        problem.numerical_hamiltonian(x, t, pu, pd)
    })
}

/// As [`check_consistency`] with a caller-supplied numerical Hamiltonian.
pub fn check_consistency_with<F>(
    problem: &ControlProblem,
    samples: usize,
    p_max: f64,
    numerical: F,
) -> Result<ConsistencyReport>
where
    F: Fn([f64; 2], f64, [f64; 2], [f64; 2]) -> f64,
{
    check_args(samples, p_max)?;
    let sampler = Sampler { problem, p_max };
    let mut worst = SamplePoint::default();
    let mut max_dev = -1.0f64;
    for n in 0..samples {
        let (x, t, p, _) = sampler.draw(n);
        let dev = (numerical(x, t, p, p) - problem.hamiltonian(x, t, p)).abs();
        // NaN deviations count as the worst possible
        if dev > max_dev || dev.is_nan() {
            max_dev = if dev.is_nan() { f64::INFINITY } else { dev };
            worst = SamplePoint { x, t, p };
        }
    }
    Ok(ConsistencyReport {
        max_deviation: max_dev,
        worst_point: worst,
        samples,
    })
}

/// Counts finite-difference probes where the numerical Hamiltonian grows
/// with a forward difference or shrinks with a backward difference.
pub fn check_monotonicity(problem: &ControlProblem, samples: usize) -> Result<MonotonicityReport> {
    check_monotonicity_with(problem, samples, DEFAULT_P_MAX, |x, t, pu, pd| {
        problem.numerical_hamiltonian(x, t, pu, pd)
    })
}

pub fn check_monotonicity_with<F>(
    problem: &ControlProblem,
    samples: usize,
    p_max: f64,
    numerical: F,
) -> Result<MonotonicityReport>
where
    F: Fn([f64; 2], f64, [f64; 2], [f64; 2]) -> f64,
{
    check_args(samples, p_max)?;
    let sampler = Sampler { problem, p_max };
    let mut violations = 0;
    let mut probes = 0;
    for n in 0..samples {
        let (x, t, p_up, p_down) = sampler.draw(n);
        let base = numerical(x, t, p_up, p_down);
        for d in 0..problem.dims() {
            let mut bumped = p_up;
            bumped[d] += PROBE_STEP;
            if !(numerical(x, t, bumped, p_down) - base <= PROBE_TOL) {
                violations += 1;
            }
            let mut bumped = p_down;
            bumped[d] += PROBE_STEP;
            if !(numerical(x, t, p_up, bumped) - base >= -PROBE_TOL) {
                violations += 1;
            }
            probes += 2;
        }
    }
    Ok(MonotonicityReport { violations, probes })
}
