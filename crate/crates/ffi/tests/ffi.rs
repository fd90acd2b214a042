use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use hjpdhg_ffi::*;

const CONSTANT: &str = r#"{
    "problem": {
        "dimension": 1,
        "dynamics": { "name": "quadratic_xdep" },
        "terminal_cost": { "name": "constant", "value": 2.5 },
        "lagrangian": { "kind": "quadratic" }
    },
    "grid": { "n_x": 8, "n_t": 4, "horizon": 1.0 }
}"#;

const QUADRATIC: &str = r#"{
    "problem": {
        "dimension": 1,
        "dynamics": { "name": "quadratic_xdep" },
        "terminal_cost": { "name": "sin_pi" },
        "lagrangian": { "kind": "quadratic" }
    },
    "grid": { "n_x": 20, "n_t": 6, "horizon": 1.0 },
    "pdhg": { "max_outer": 50000 }
}"#;

fn last_error() -> String {
    let p = hj_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn problem(json: &str) -> *mut HjProblem {
    let text = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { hj_problem_from_json(text.as_ptr(), &mut out) }, HjStatus::Ok);
    assert!(!out.is_null());
    out
}

#[test]
fn constant_problem_round_trip() {
    let p = problem(CONSTANT);
    let (mut nt, mut nx, mut ny) = (0, 0, 0);
    assert_eq!(unsafe { hj_problem_shape(p, &mut nt, &mut nx, &mut ny) }, HjStatus::Ok);
    assert_eq!((nt, nx, ny), (4, 8, 1));

    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { hj_solve(p, &mut sol) }, HjStatus::Ok);
    let mut iterations = 0;
    let mut converged = false;
    let mut res = [f64::NAN; 3];
    assert_eq!(
        unsafe { hj_solution_summary(sol, &mut iterations, &mut converged, res.as_mut_ptr()) },
        HjStatus::Ok
    );
    assert!(converged && iterations <= 2);
    assert!(res.iter().all(|&r| r < 1e-12));

    let mut phi = vec![0.0; 32];
    assert_eq!(unsafe { hj_solution_phi(sol, phi.as_mut_ptr(), 32) }, HjStatus::Ok);
    assert!(phi.iter().all(|&v| v == 2.5));
    let mut rho = vec![0.0; 32];
    assert_eq!(unsafe { hj_solution_rho(sol, rho.as_mut_ptr(), 32) }, HjStatus::Ok);
    assert!(rho.iter().all(|&v| v == 1.0));

    // wrong buffer length
    assert_eq!(
        unsafe { hj_solution_phi(sol, phi.as_mut_ptr(), 31) },
        HjStatus::InvalidArgument
    );
    assert!(last_error().contains("32 required"));
    assert_eq!(
        unsafe { hj_solution_control(sol, 1, phi.as_mut_ptr(), 32) },
        HjStatus::InvalidArgument
    );

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { hj_solution_write(sol, path.as_ptr()) }, HjStatus::Ok);
    assert!(dir.path().join("metadata.json").is_file());
    assert!(dir.path().join("alpha_2.csv").is_file());

    unsafe {
        hj_solution_free(sol);
        hj_problem_free(p);
    }
}

#[test]
fn trajectories_through_the_interface() {
    let p = problem(QUADRATIC);
    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { hj_solve(p, &mut sol) }, HjStatus::Ok);
    let mut control = vec![0.0; 120];
    assert_eq!(
        unsafe { hj_solution_control(sol, 0, control.as_mut_ptr(), 120) },
        HjStatus::Ok
    );
    assert!(control.iter().any(|&v| v != 0.0));

    let x0 = [0.7];
    let mut traj = ptr::null_mut();
    assert_eq!(
        unsafe { hj_trajectory(sol, x0.as_ptr(), 1, 0.0, 10, ptr::null(), &mut traj) },
        HjStatus::Ok
    );
    let mut len = 0;
    assert_eq!(unsafe { hj_trajectory_len(traj, &mut len) }, HjStatus::Ok);
    assert_eq!(len, 11);
    let mut times = vec![0.0; 11];
    let mut states = vec![0.0; 11];
    assert_eq!(
        unsafe {
            hj_trajectory_copy(traj, times.as_mut_ptr(), states.as_mut_ptr(), ptr::null_mut(), 11)
        },
        HjStatus::Ok
    );
    assert_eq!(states[0], 0.7);
    assert_eq!(times[10], 1.0);

    // two components for a one-dimensional problem
    let mut other = ptr::null_mut();
    assert_eq!(
        unsafe { hj_trajectory(sol, [0.1, 0.2].as_ptr(), 2, 0.0, 10, ptr::null(), &mut other) },
        HjStatus::InvalidArgument
    );
    assert!(other.is_null());

    unsafe {
        hj_trajectory_free(traj);
        hj_solution_free(sol);
        hj_problem_free(p);
    }
}

#[test]
fn check_reports_a_consistent_scheme() {
    let p = problem(QUADRATIC);
    let mut dev = f64::NAN;
    let mut violations = usize::MAX;
    assert_eq!(
        unsafe { hj_problem_check(p, 200, &mut dev, &mut violations) },
        HjStatus::Ok
    );
    assert!(dev <= 1e-9);
    assert_eq!(violations, 0);
    unsafe { hj_problem_free(p) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { hj_problem_from_json(ptr::null(), &mut out) },
        HjStatus::NullPointer
    );
    assert!(out.is_null());

    let bad = CString::new(CONSTANT.replace("\"n_t\": 4", "\"n_t\": 4, \"nt\": 4")).unwrap();
    assert_eq!(
        unsafe { hj_problem_from_json(bad.as_ptr(), &mut out) },
        HjStatus::Config
    );
    assert!(last_error().contains("grid.nt"), "{}", last_error());

    let not_json = CString::new("{").unwrap();
    assert_eq!(
        unsafe { hj_problem_from_json(not_json.as_ptr(), &mut out) },
        HjStatus::Config
    );

    let mut sol = ptr::null_mut();
    assert_eq!(unsafe { hj_solve(ptr::null(), &mut sol) }, HjStatus::NullPointer);

    let p = problem(QUADRATIC.replace("50000", "3").as_str());
    assert_eq!(unsafe { hj_solve(p, &mut sol) }, HjStatus::NotConverged);
    assert!(!sol.is_null());
    unsafe {
        hj_solution_free(sol);
        hj_problem_free(p);
        // freeing null is a no-op
        hj_problem_free(ptr::null_mut());
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(hj_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/hjpdhg.h");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\n\
             int main(void) {{\n\
               HjProblem *p = 0;\n\
               enum HjStatus s = hj_problem_from_json(\"{{}}\", &p);\n\
               return s == HJ_STATUS_OK ? 0 : (int)s;\n\
             }}\n"
        ),
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
}
