use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn load(name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(scenario_path(name)).unwrap()).unwrap()
}

fn crmac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crmac")).args(args).output().unwrap()
}

fn write_scenario(dir: &Path, file: &str, v: &Value) -> String {
    let p = dir.join(file);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.display().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Shortened SISO demo for quick runs.
fn short_siso(t_final: f64) -> Value {
    let mut v = load("siso_demo.scenario");
    v["simulation"]["t_final"] = json!(t_final);
    v
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn aircraft_fixture_holds_the_published_matrices() {
    let v = load("aircraft.scenario");
    assert_eq!(v["plant"]["a"][0][1], json!(18.94));
    assert_eq!(v["plant"]["b"][0][0], json!(10.1));
    assert_eq!(v["plant"]["integral_action"]["c_z"], json!([[0, -250, 0, 250]]));
    assert_eq!(v["plant"]["psi_t"], json!([[-2, 1.5, 2, -2], [1.5, -2, 2, 1]]));
    assert_eq!(v["adaptive"]["gamma_theta"], json!([1, 1, 1, 1, 0]));
    assert_eq!(v["design"]["nu"], json!(0.01));
    let sc = crmac_cli::Scenario::load(&scenario_path("aircraft.scenario")).unwrap();
    assert_eq!(sc.plant.n(), 5);
    assert_eq!(sc.plant.c.shape(), (5, 4));
    assert_eq!(sc.plant.c[(1, 2)], -250.0);
    assert_eq!(sc.plant.b_ref[(4, 0)], -1.0);
}

#[test]
fn ragged_matrix_is_an_input_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = load("siso_demo.scenario");
    v["plant"]["a"] = json!([[0, 1], [-1]]);
    let cfg = write_scenario(dir.path(), "bad.scenario", &v);
    let out = crmac(&["design", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let msg = stderr(&out);
    assert!(
        msg.contains("plant.a") && msg.contains("ragged") && msg.contains("line"),
        "{msg}"
    );
}

#[test]
fn malformed_json_reports_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.scenario");
    fs::write(&p, "{\n  \"schema_version\": 1,\n  \"plant\": [\n").unwrap();
    let out = crmac(&["design", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));
}

#[test]
fn submarginal_rho_fails_certification_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let cfg = scenario_path("siso_demo.scenario");
    let cfg = cfg.to_str().unwrap();
    let out = crmac(&["design", "--config", cfg, "--out-dir", out_dir, "--rho", "0.5"]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("does not exceed rho*"), "{}", stdout(&out));
    // Diagnostics are still written.
    let art: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("siso_demo/design.json")).unwrap()).unwrap();
    assert_eq!(art["certified"], json!(false));

    let out = crmac(&[
        "design",
        "--config",
        cfg,
        "--out-dir",
        out_dir,
        "--rho",
        "0.5",
        "--allow-submarginal",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("warning"), "{}", stdout(&out));
}

#[test]
fn zero_horizon_gives_the_initial_row_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_path("siso_demo.scenario");
    let out = crmac(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--t-final",
        "0",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("siso_demo/trace_adaptive.csv")).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("t,"));
    let row: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(&row[..3], &[0.0, 0.5, -0.5]);
}

#[test]
fn design_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    for name in ["siso_demo", "aircraft"] {
        let cfg = scenario_path(&format!("{name}.scenario"));
        let out = crmac(&["design", "--config", cfg.to_str().unwrap(), "--out-dir", out_dir]);
        assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
        let art = dir.path().join(name).join("design.json");
        let out = crmac(&["verify", art.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stdout(&out));
        assert!(stdout(&out).contains("all checks pass"));
    }
    let summary = stdout(&crmac(&[
        "design",
        "--config",
        scenario_path("aircraft.scenario").to_str().unwrap(),
        "--out-dir",
        out_dir,
    ]));
    assert!(
        summary.contains("nu = 0.01") && summary.contains("W orthogonality residual"),
        "{summary}"
    );
}

#[test]
fn siso_phase_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario_path("siso_demo.scenario");
    let out = crmac(&[
        "design",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let art = dir.path().join("siso_demo/design.json");
    let out = crmac(&["verify", art.to_str().unwrap(), "--format", "json"]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let phase = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "phase")
        .unwrap();
    assert_eq!(phase["passed"], json!(true));
    assert!(phase["value"].as_f64().unwrap() <= 90.0);
}

fn tamper(art_path: &Path) {
    let mut art: Value = serde_json::from_str(&fs::read_to_string(art_path).unwrap()).unwrap();
    let l = &mut art["gain"]["l"][0][0];
    *l = json!(l.as_f64().unwrap() + 0.5);
    fs::write(art_path, serde_json::to_string(&art).unwrap()).unwrap();
}

#[test]
fn tampered_gain_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    for (name, check) in [("siso_demo", "kyp_residual"), ("aircraft", "observer_gain")] {
        let cfg = scenario_path(&format!("{name}.scenario"));
        assert_eq!(
            code(&crmac(&[
                "design",
                "--config",
                cfg.to_str().unwrap(),
                "--out-dir",
                out_dir
            ])),
            0
        );
        let art = dir.path().join(name).join("design.json");
        tamper(&art);
        let out = crmac(&["verify", art.to_str().unwrap()]);
        assert_ne!(code(&out), 0);
        assert!(stdout(&out).contains(&format!("[FAIL] {check}")), "{}", stdout(&out));
    }
}

#[test]
fn unreadable_artifact_is_an_input_error() {
    let out = crmac(&["verify", "/nonexistent/design.json"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unmatched_plant_makes_the_monitor_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = short_siso(1.0);
    v["reference_model"]["a_m"] = json!([[-1, 1], [0, -2]]);
    v["plant"]["c_t"] = json!([[1, 2]]);
    let cfg = write_scenario(dir.path(), "unmatched.scenario", &v);
    let out = crmac(&["simulate", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}{}", stdout(&out), stderr(&out));
    assert!(stderr(&out).contains("monitor infeasible"));
}

#[test]
fn halving_dt_leaves_final_state_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "siso_demo.scenario", &short_siso(20.0));
    let run = |dt: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = crmac(&[
            "simulate",
            "--config",
            &cfg,
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--dt",
            dt,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let rows = csv_rows(&out_dir.join("siso_demo/trace_adaptive.csv"));
        rows.last().unwrap().clone()
    };
    let a = run("0.001", "coarse");
    let b = run("0.0005", "fine");
    assert_eq!(a[0], 20.0);
    assert_eq!(b[0], 20.0);
    // Columns 1..=4 are x and x_m.
    let diff: f64 = (1..=4).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = (1..=4).map(|i| a[i].powi(2)).sum::<f64>().sqrt();
    assert!(diff <= 1e-6 * norm, "{diff} vs {norm}");
}

#[test]
fn repeated_runs_are_byte_identical_and_jobs_run_in_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let mut second = short_siso(5.0);
    second["name"] = json!("siso_copy");
    let c1 = write_scenario(dir.path(), "a.scenario", &short_siso(5.0));
    let c2 = write_scenario(dir.path(), "b.scenario", &second);
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    for out in [&one, &two] {
        let o = crmac(&[
            "simulate",
            "--config",
            &c1,
            &c2,
            "--jobs",
            "2",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for name in ["siso_demo", "siso_copy"] {
        let a = fs::read(one.join(name).join("trace_adaptive.csv")).unwrap();
        let b = fs::read(two.join(name).join("trace_adaptive.csv")).unwrap();
        assert!(a == b, "{name} traces differ");
    }
    assert_eq!(
        fs::read(one.join("siso_demo/trace_adaptive.csv")).unwrap(),
        fs::read(one.join("siso_copy/trace_adaptive.csv")).unwrap()
    );
}

#[test]
fn metrics_json_has_the_documented_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "siso_demo.scenario", &short_siso(2.0));
    let out = crmac(&[
        "simulate",
        "--config",
        &cfg,
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["certified"], json!(true));
    let metrics: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("siso_demo/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["schema_version"], json!(1));
    let run = &metrics["runs"][0];
    for key in [
        "peak_ey_norm",
        "final_window_ey_norm",
        "vdot_violations",
        "diverged",
        "wall_time",
    ] {
        assert!(run.get(key).is_some(), "missing {key}");
    }
    assert_eq!(run["vdot_violations"], json!(0));
}

#[test]
fn lqr_baseline_without_a_baseline_is_rejected() {
    let cfg = scenario_path("siso_demo.scenario");
    let out = crmac(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--controllers",
        "lqr-baseline",
        "--out-dir",
        "/tmp/unused",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--controllers"));
}
