//! C interface to the solver.
//!
//! Every function returns an [`HjStatus`] code. On failure the message of the
//! last error on the calling thread is available from
//! [`hj_last_error_message`]. Handles are opaque and must be released with
//! the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hjpdhg::cli::config::RunConfig;
use hjpdhg::cli::io;
use hjpdhg::pdhg::{solve_windowed, SolveReport, SolverState};
use hjpdhg::problem::{check_consistency, check_monotonicity};
use hjpdhg::trajectory::{integrate_ode, integrate_sde, TrajectoryResult};
use hjpdhg::{ControlProblem, Error};

/// Status codes returned by every function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    /// The solver stopped at its iteration limit; the solution is still
    /// returned.
    NotConverged = 5,
    Panic = 6,
}

/// A validated run configuration and the problem it describes.
pub struct HjProblem {
    config: RunConfig,
    problem: ControlProblem,
}

/// Solver output bound to the problem it was computed for.
pub struct HjSolution {
    config: RunConfig,
    problem: ControlProblem,
    state: SolverState,
    report: SolveReport,
}

pub struct HjTrajectory {
    inner: TrajectoryResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HjStatus {
    match e {
        Error::Config { .. } | Error::Json(_) => HjStatus::Config,
        Error::Io(_) | Error::SolutionNotFound(_) | Error::MalformedData { .. } => HjStatus::Io,
        _ => HjStatus::InvalidArgument,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<HjStatus, (HjStatus, String)>) -> HjStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {message}"));
            HjStatus::Panic
        }
    }
}

fn fail(e: Error) -> (HjStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(name: &str) -> (HjStatus, String) {
    (HjStatus::NullPointer, format!("`{name}` is null"))
}

fn invalid(message: impl Into<String>) -> (HjStatus, String) {
    (HjStatus::InvalidArgument, message.into())
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, (HjStatus, String)> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{name}` is not valid UTF-8")))
}

unsafe fn reference<'a, T>(p: *const T, name: &str) -> Result<&'a T, (HjStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<HjStatus, (HjStatus, String)> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len != src.len() {
        return Err(invalid(format!(
            "buffer holds {len} values, {} required",
            src.len()
        )));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    Ok(HjStatus::Ok)
}

/// Message of the last failed call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hj_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON run configuration (the format read by `hjpdhg solve`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hj_problem_from_json(
    json: *const c_char,
    out: *mut *mut HjProblem,
) -> HjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = c_str(json, "json")?;
        let config = RunConfig::from_json(text).map_err(fail)?;
        let problem = config.build_problem().map_err(fail)?;
        *out = Box::into_raw(Box::new(HjProblem { config, problem }));
        Ok(HjStatus::Ok)
    })
}

/// # Safety
/// `problem` must come from [`hj_problem_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hj_problem_free(problem: *mut HjProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Grid shape `(n_t, n_x, n_y)`; `n_y` is 1 for one-dimensional problems.
/// Field buffers hold `n_t * n_x * n_y` values in time-major order.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hj_problem_shape(
    problem: *const HjProblem,
    n_t: *mut usize,
    n_x: *mut usize,
    n_y: *mut usize,
) -> HjStatus {
    guard(|| {
        let p = reference(problem, "problem")?;
        if n_t.is_null() || n_x.is_null() || n_y.is_null() {
            return Err(null("shape"));
        }
        let (a, b, c) = p.problem.grid().shape();
        (*n_t, *n_x, *n_y) = (a, b, c);
        Ok(HjStatus::Ok)
    })
}

/// Samples the numerical Hamiltonian: largest consistency deviation and the
/// number of monotonicity violations.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hj_problem_check(
    problem: *const HjProblem,
    samples: usize,
    max_deviation: *mut f64,
    violations: *mut usize,
) -> HjStatus {
    guard(|| {
        let p = reference(problem, "problem")?;
        if max_deviation.is_null() || violations.is_null() {
            return Err(null("output"));
        }
        let c = check_consistency(&p.problem, samples).map_err(fail)?;
        let m = check_monotonicity(&p.problem, samples).map_err(fail)?;
        *max_deviation = c.max_deviation;
        *violations = m.violations;
        Ok(HjStatus::Ok)
    })
}

/// Runs the solver with the configuration's settings. Returns
/// `NotConverged` with a valid solution when the iteration limit is reached.
///
/// # Safety
/// `problem` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hj_solve(
    problem: *const HjProblem,
    out: *mut *mut HjSolution,
) -> HjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let p = reference(problem, "problem")?;
        let (state, report) = solve_windowed(&p.problem, &p.config.pdhg).map_err(fail)?;
        let converged = report.converged;
        *out = Box::into_raw(Box::new(HjSolution {
            config: p.config.clone(),
            problem: p.problem.clone(),
            state,
            report,
        }));
        Ok(if converged {
            HjStatus::Ok
        } else {
            HjStatus::NotConverged
        })
    })
}

/// # Safety
/// `solution` must come from [`hj_solve`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hj_solution_free(solution: *mut HjSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Outer iterations taken, convergence flag and final residuals.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hj_solution_summary(
    solution: *const HjSolution,
    iterations: *mut usize,
    converged: *mut bool,
    residuals: *mut f64,
) -> HjStatus {
    guard(|| {
        let s = reference(solution, "solution")?;
        if iterations.is_null() || converged.is_null() {
            return Err(null("output"));
        }
        *iterations = s.report.outer_iterations;
        *converged = s.report.converged;
        if !residuals.is_null() {
            let r = s.report.final_residuals();
            ptr::copy_nonoverlapping([r.hj, r.prox, r.continuity].as_ptr(), residuals, 3);
        }
        Ok(HjStatus::Ok)
    })
}

/// Copies the value function into `buf` (`len` values).
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hj_solution_phi(
    solution: *const HjSolution,
    buf: *mut f64,
    len: usize,
) -> HjStatus {
    guard(|| copy_out(reference(solution, "solution")?.state.phi.as_slice(), buf, len))
}

/// Copies the multiplier into `buf` (`len` values).
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hj_solution_rho(
    solution: *const HjSolution,
    buf: *mut f64,
    len: usize,
) -> HjStatus {
    guard(|| copy_out(reference(solution, "solution")?.state.rho.as_slice(), buf, len))
}

/// Copies the feedback control of dimension `dim` (up plus down slot).
/// Fails for dimensions the control does not act on.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hj_solution_control(
    solution: *const HjSolution,
    dim: usize,
    buf: *mut f64,
    len: usize,
) -> HjStatus {
    guard(|| {
        let s = reference(solution, "solution")?;
        let pair = s
            .state
            .alpha
            .get(dim)
            .ok_or_else(|| invalid(format!("dimension {dim} out of range")))?
            .as_ref()
            .ok_or_else(|| invalid(format!("dimension {dim} carries no control")))?;
        copy_out(pair.combined().as_slice(), buf, len)
    })
}

/// Writes fields and `metadata.json` to `dir`, as `hjpdhg solve` does.
///
/// # Safety
/// `dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hj_solution_write(
    solution: *const HjSolution,
    dir: *const c_char,
) -> HjStatus {
    guard(|| {
        let s = reference(solution, "solution")?;
        let dir = Path::new(c_str(dir, "dir")?);
        io::write_state(dir, &s.state).map_err(fail)?;
        let meta = io::Metadata::new(&s.config, s.problem.grid(), &s.report);
        io::write_json(&dir.join(io::METADATA), &meta).map_err(fail)?;
        Ok(HjStatus::Ok)
    })
}

/// Integrates an optimal trajectory from `x0` (`dims` values) at time `t0`
/// to the horizon in `steps` steps. With a non-null `seed` on a viscous
/// problem the stochastic path is drawn; otherwise the ODE is integrated.
///
/// # Safety
/// `x0` must point to `dims` doubles, `seed` may be null, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hj_trajectory(
    solution: *const HjSolution,
    x0: *const f64,
    dims: usize,
    t0: f64,
    steps: usize,
    seed: *const u64,
    out: *mut *mut HjTrajectory,
) -> HjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = reference(solution, "solution")?;
        if x0.is_null() {
            return Err(null("x0"));
        }
        if dims != s.problem.dims() {
            return Err(invalid(format!(
                "x0 has {dims} components, the problem has {}",
                s.problem.dims()
            )));
        }
        let mut start = [0.0; 2];
        start[..dims].copy_from_slice(std::slice::from_raw_parts(x0, dims));
        let inner = match seed.as_ref() {
            Some(&seed) if s.problem.is_viscous() => {
                integrate_sde(&s.state, &s.problem, start, t0, steps, seed)
            }
            _ => integrate_ode(&s.state, &s.problem, start, t0, steps),
        }
        .map_err(fail)?;
        *out = Box::into_raw(Box::new(HjTrajectory { inner }));
        Ok(HjStatus::Ok)
    })
}

/// # Safety
/// `trajectory` must come from [`hj_trajectory`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hj_trajectory_free(trajectory: *mut HjTrajectory) {
    if !trajectory.is_null() {
        drop(Box::from_raw(trajectory));
    }
}

/// Number of stored points (steps plus one).
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hj_trajectory_len(
    trajectory: *const HjTrajectory,
    len: *mut usize,
) -> HjStatus {
    guard(|| {
        let t = reference(trajectory, "trajectory")?;
        if len.is_null() {
            return Err(null("len"));
        }
        *len = t.inner.len();
        Ok(HjStatus::Ok)
    })
}

/// Copies times (`len` values), states and controls (`len * dims` values each,
/// point-major). Any of the three buffers may be null to skip it.
///
/// # Safety
/// Non-null buffers must have room for the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn hj_trajectory_copy(
    trajectory: *const HjTrajectory,
    times: *mut f64,
    states: *mut f64,
    controls: *mut f64,
    len: usize,
) -> HjStatus {
    guard(|| {
        let t = &reference(trajectory, "trajectory")?.inner;
        if len != t.len() {
            return Err(invalid(format!("len {len} does not match {}", t.len())));
        }
        let flat = |v: &[[f64; 2]]| -> Vec<f64> {
            v.iter().flat_map(|p| p[..t.dims].to_vec()).collect()
        };
        if !times.is_null() {
            copy_out(&t.times, times, len)?;
        }
        if !states.is_null() {
            copy_out(&flat(&t.states), states, len * t.dims)?;
        }
        if !controls.is_null() {
            copy_out(&flat(&t.controls), controls, len * t.dims)?;
        }
        Ok(HjStatus::Ok)
    })
}
