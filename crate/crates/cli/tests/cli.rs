use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_telehaptic"));
    c.env("RUST_LOG", "warn");
    c
}

fn free_endpoint() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "a.json", r#"{"not_a_field": 1}"#);
    let out = bin().args(["robot", "--config"]).arg(&unknown).output().unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));

    let invalid = write(dir.path(), "b.json", r#"{"robot_endpoint": "nowhere"}"#);
    assert_eq!(code(&bin().args(["robot", "--config"]).arg(&invalid).output().unwrap()), 2);

    let wrong_role = write(dir.path(), "c.json", r#"{"role": "operator"}"#);
    assert_eq!(code(&bin().args(["robot", "--config"]).arg(&wrong_role).output().unwrap()), 2);

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&bin().args(["bridge", "--config"]).arg(&missing).output().unwrap()), 2);
}

#[test]
fn bad_policy_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "op.json", r#"{"role": "operator"}"#);
    let policy = write(dir.path(), "p.json", r#"{"kind": "scripted_trajectory", "trajectory": "nope.csv"}"#);
    let out = bin().args(["operator", "--config"]).arg(&cfg).arg("--policy").arg(&policy).output().unwrap();
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unreachable_robot_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "op.json", r#"{"role": "operator", "connect_timeout_s": 1.0}"#);
    let policy = write(dir.path(), "p.json", r#"{"kind": "visual_closed_loop", "task": "grasp"}"#);
    let out = bin()
        .args(["operator", "--config"])
        .arg(&cfg)
        .arg("--policy")
        .arg(&policy)
        .env("TELEHAPTIC_ROBOT_ENDPOINT", free_endpoint())
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn robot_and_operator_over_tcp_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let endpoint = free_endpoint();
    let robot_log = dir.path().join("robot.log");
    let operator_log = dir.path().join("operator.log");
    let common = r#""scene": "hard_bottle", "duration_s": 1.0, "connect_timeout_s": 10.0"#;
    let robot_cfg = write(
        dir.path(),
        "robot.json",
        &format!(r#"{{"role": "robot", {common}, "log_path": {:?}}}"#, robot_log.to_str().unwrap()),
    );
    let op_cfg = write(
        dir.path(),
        "operator.json",
        &format!(r#"{{"role": "operator", {common}, "log_path": {:?}}}"#, operator_log.to_str().unwrap()),
    );
    let policy = write(dir.path(), "p.json", r#"{"kind": "haptic_closed_loop", "task": "grasp"}"#);

    let robot = bin()
        .args(["robot", "--config"])
        .arg(&robot_cfg)
        .env("TELEHAPTIC_ROBOT_ENDPOINT", &endpoint)
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let op = bin()
        .args(["operator", "--config"])
        .arg(&op_cfg)
        .arg("--policy")
        .arg(&policy)
        .env("TELEHAPTIC_ROBOT_ENDPOINT", &endpoint)
        .output()
        .unwrap();
    let robot = robot.wait_with_output().unwrap();
    assert_eq!(code(&op), 0, "{}", String::from_utf8_lossy(&op.stderr));
    assert_eq!(code(&robot), 0, "{}", String::from_utf8_lossy(&robot.stderr));

    let op_report: serde_json::Value = serde_json::from_slice(&op.stdout).unwrap();
    let robot_report: serde_json::Value = serde_json::from_slice(&robot.stdout).unwrap();
    assert_eq!(op_report["control_sent"], 501);
    assert_eq!(robot_report["controls_received"], 501);
    assert_eq!(op_report["peer_lost"], false);

    let out = bin().arg("replay").arg("--log").arg(&operator_log).arg("--log").arg(&robot_log).output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["checked"].as_u64().unwrap() >= 501);
    assert_eq!(report["unmatched"], 0);

    let garbage = write(dir.path(), "garbage.log", "not a log");
    assert_eq!(code(&bin().arg("replay").arg("--log").arg(&garbage).output().unwrap()), 2);
}

#[test]
fn stiffness_experiment_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["experiment", "stiffness_curves", "--seed", "3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("PASS stiffness_curves.")));
    assert!(!stdout.contains("FAIL"));
    for f in ["stiffness_curves.csv", "stiffness_curves_points.csv", "summary.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiments"][0]["name"], "stiffness_curves");
    assert_eq!(summary["experiments"][0]["seed"], 3);
}

#[test]
fn bad_experiment_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [vec!["experiment", "no_such"], vec!["experiment", "active_slide", "--trials", "0"]] {
        let out = bin().args(&args).arg("--out").arg(dir.path()).output().unwrap();
        assert_eq!(code(&out), 2, "{args:?}");
    }
}
