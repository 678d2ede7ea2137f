use std::fs;
use std::process::{Command, Output};

fn sphereflock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphereflock"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn lists_scenarios() {
    let out = sphereflock(&["scenarios"]);
    assert!(out.status.success());
    let names = stdout(&out);
    for name in [
        "fig1",
        "fig2",
        "fig9",
        "fig0_ls",
        "fig3_family:0.3",
        "fig7_family:1.26",
    ] {
        assert!(names.lines().any(|l| l == name), "missing {name}");
    }
}

#[test]
fn shown_scenario_is_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = sphereflock(&["scenarios", "--show", "fig2"]);
    assert!(out.status.success());
    let path = dir.path().join("fig2.json");
    fs::write(&path, &out.stdout).unwrap();
    let run = sphereflock(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--t-final",
        "0.01",
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
}

#[test]
fn unknown_scenario_is_a_config_error() {
    let out = sphereflock(&["scenarios", "--show", "fig42"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = sphereflock(&[
        "simulate",
        "--scenario",
        "fig2",
        "--t-final",
        "0.2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = json(&out);
    assert_eq!(summary["t_final"], 0.2);
    assert_eq!(summary["snapshots"], 3);
    for file in ["trajectory.csv", "diagnostics.csv", "metadata.json"] {
        assert!(out_dir.join(file).is_file(), "missing {file}");
    }
    let traj = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    // header plus 6 agents at t = 0, 0.1, 0.2
    assert_eq!(traj.lines().count(), 1 + 6 * 3);
}

#[test]
fn zero_horizon_gives_one_snapshot() {
    let out = sphereflock(&["simulate", "--scenario", "fig2", "--t-final", "0"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["snapshots"], 1);
}

#[test]
fn invalid_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"name": "bad"}"#).unwrap();
    let out = sphereflock(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = sphereflock(&["simulate", "--scenario", "fig2", "--dt", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn blowup_exits_with_3_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fast.json");
    let out_dir = dir.path().join("run");
    fs::write(
        &cfg,
        r#"{"name": "fast", "model": "main",
            "psi": {"kind": "exp_decay", "scale": 2.0},
            "sigma": {"sigma_a": 1.0, "sigma_r": 0.5, "beta": 1.0},
            "integrator": {"dt": 0.001, "t_final": 1.0},
            "initial": {"source": "random", "seed": 1, "n": 6, "speed_max": 1e4}}"#,
    )
    .unwrap();
    let out = sphereflock(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["partial"], true);
}

#[test]
fn sweep_prints_one_row_per_value() {
    let out = sphereflock(&[
        "sweep",
        "--scenario",
        "fig2",
        "--t-final",
        "0.05",
        "--param",
        "sigma.sigma_r",
        "--values",
        "0.1,0.3",
        "--jobs",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = stdout(&out);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "value,max_diameter,rho_tail_mean,regime,error");
    assert!(rows[1].starts_with("1e-1,"));
    assert!(rows[2].starts_with("3e-1,"));
    assert_eq!(rows.len(), 3);
}

#[test]
fn empty_sweep_is_header_only() {
    let out = sphereflock(&[
        "sweep",
        "--scenario",
        "fig2",
        "--param",
        "sigma.sigma_r",
        "--values=",
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 1);
}

#[test]
fn sweep_over_unknown_param_is_rejected() {
    let out = sphereflock(&[
        "sweep",
        "--scenario",
        "fig2",
        "--param",
        "sigma.nope",
        "--values",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn minimize_two_agents_matches_closed_form() {
    let out = sphereflock(&["minimize", "--n", "2", "--sigma-a", "1", "--sigma-r", "1"]);
    assert!(out.status.success());
    let m = json(&out);
    // σ(s) = 1 − 1/s, so Φ(s) = s − ln s is minimal at s = 1 and E_C = 2Φ(1)/16.
    assert!((m["e_c_min"].as_f64().unwrap() - 0.125).abs() < 1e-10);
    assert_eq!(m["positions"].as_array().unwrap().len(), 2);
}

#[test]
fn minimize_needs_a_kernel() {
    let out = sphereflock(&["minimize", "--n", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_battery_budget_skips_everything() {
    let out = sphereflock(&["verify", "--battery", "regimes", "--budget", "0"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = json(&out);
    assert!(report["cases"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["verdict"] == "skipped"));
}
