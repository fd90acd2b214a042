use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hjpdhg::cli::io::read_metadata;

fn hjpdhg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjpdhg"))
        .args(args)
        .env("HJPDHG_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, terminal: &str, n_x: usize, n_t: usize, pdhg: &str) -> String {
    let path = dir.join(name);
    let text = format!(
        r#"{{
            "problem": {{
                "dimension": 1,
                "dynamics": {{ "name": "quadratic_xdep" }},
                "terminal_cost": {terminal},
                "lagrangian": {{ "kind": "quadratic" }}
            }},
            "grid": {{ "n_x": {n_x}, "n_t": {n_t}, "horizon": 1.0 }},
            "pdhg": {pdhg}
        }}"#
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn constant_terminal_cost_solves_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{ "name": "constant", "value": 3.0 }"#,
        16,
        5,
        "{}",
    );
    let out = dir.path().join("out");
    let o = hjpdhg(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let meta = read_metadata(&out).unwrap();
    assert!(meta.converged);
    assert!(meta.outer_iterations <= 2);
    assert_eq!(meta.grid.shape, [5, 16, 1]);
    for f in ["phi.csv", "rho.csv", "alpha_1.csv", "alpha_2.csv", "metadata.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn solve_then_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "q.json",
        r#"{ "name": "sin_pi" }"#,
        40,
        11,
        r#"{ "max_outer": 50000 }"#,
    );
    let out = dir.path().join("sol");
    let out_s = out.to_str().unwrap();
    let o = hjpdhg(&["solve", "--config", &cfg, "--out", out_s]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let meta = read_metadata(&out).unwrap();
    let text = fs::read_to_string(out.join("metadata.json")).unwrap();
    let echoed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(echoed["config"]["grid"]["n_x"], 40);
    assert_eq!(meta.residual_history.len(), meta.outer_iterations);
    assert!(meta.final_residuals.hj <= 1e-6);

    let o = hjpdhg(&[
        "trajectories",
        "--solution",
        out_s,
        "--x0",
        "0.5",
        "--x0",
        "1.2",
        "--steps",
        "25",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for n in 0..2 {
        let text = fs::read_to_string(out.join(format!("traj_{n}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("s,gamma_1,alpha_1"));
        assert_eq!(lines.count(), 26);
    }

    let o = hjpdhg(&["trajectories", "--solution", out_s, "--x0", "0.5,1.0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("x0"), "{}", stderr(&o));
}

#[test]
fn trajectories_need_a_solution() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("never-solved");
    let o = hjpdhg(&[
        "trajectories",
        "--solution",
        missing.to_str().unwrap(),
        "--x0",
        "0.5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("solution not found"), "{}", stderr(&o));
}

#[test]
fn check_passes_on_the_quadratic_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "q.json", r#"{ "name": "sin_pi" }"#, 40, 11, "{}");
    let o = hjpdhg(&["check", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("violations 0"));
}

#[test]
fn unconverged_solve_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "q.json",
        r#"{ "name": "sin_pi" }"#,
        40,
        11,
        r#"{ "max_outer": 5 }"#,
    );
    let out = dir.path().join("out");
    let o = hjpdhg(&["solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let meta = read_metadata(&out).unwrap();
    assert!(!meta.converged);
    assert_eq!(meta.outer_iterations, 5);
}

#[test]
fn compare_writes_both_solutions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "q.json",
        r#"{ "name": "sin_pi" }"#,
        20,
        6,
        r#"{ "max_outer": 50000 }"#,
    );
    let out = dir.path().join("cmp");
    let o = hjpdhg(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert!(summary["comparison"]["l_inf"].as_f64().unwrap() > 0.0);
    assert!(out.join("explicit.csv").is_file());
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{ "name": "sin_pi" }"#,
        40,
        11,
        r#"{ "tau_phi": -1.0 }"#,
    );
    let o = hjpdhg(&["solve", "--config", &cfg, "--out", "unused"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pdhg"), "{}", stderr(&o));
    assert!(!Path::new("unused").exists());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        hjpdhg::cli::parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 3);
}
