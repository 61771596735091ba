use std::path::PathBuf;
use std::process::{Command, Output};

use gazeguide_core::records::{CSV_COLUMNS, METRICS_FILE, RECORDS_FILE};

fn scenes() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn scene(name: &str) -> String {
    scenes().join(format!("{name}.json")).display().to_string()
}

fn gazeguide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazeguide")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_prints_metrics() {
    let out = gazeguide(&["run", "--scene", &scene("straight_line"), "--agent", "compliant", "--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let metrics: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(metrics["completed"], true);
    assert_eq!(metrics["planned_stops"], 2);
}

#[test]
fn run_output_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = gazeguide(&["run", "--scene", &scene("reference"), "--agent", "distracted", "--seed", "7", "--out", d]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let csv = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_COLUMNS.join(","));
    let record = dir.path().join(RECORDS_FILE);
    let gaze = dir.path().join("reference_7.gaze");
    let replay =
        gazeguide(&["replay", "--scene", &scene("reference"), "--record", record.to_str().unwrap(), "--gaze", gaze.to_str().unwrap()]);
    assert_eq!(replay.status.code(), Some(0), "{replay:?}");

    // a trace that does not belong to the record diverges: runtime failure
    let other = tempfile::tempdir().unwrap();
    let o = other.path().to_str().unwrap();
    gazeguide(&["run", "--scene", &scene("reference"), "--agent", "non-compliant", "--seed", "7", "--out", o]);
    let wrong = other.path().join("reference_7.gaze");
    let replay =
        gazeguide(&["replay", "--scene", &scene("reference"), "--record", record.to_str().unwrap(), "--gaze", wrong.to_str().unwrap()]);
    assert_eq!(replay.status.code(), Some(1), "{replay:?}");
}

#[test]
fn config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"scene_id": "minimal", "seed": 2, "escalation": {"t_medium_s": 0.5, "t_high_s": 1.0}}"#).unwrap();
    let out = gazeguide(&["run", "--scene", &scene("minimal"), "--agent", "non-compliant", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let metrics: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(metrics["escalations"]["high"], 1);

    std::fs::write(&cfg, r#"{"scene_id": "reference", "seed": 2}"#).unwrap();
    let out = gazeguide(&["run", "--scene", &scene("minimal"), "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "scene mismatch");
    std::fs::write(&cfg, r#"{"scene_id": "minimal", "seed": 2, "tick_hz": 0}"#).unwrap();
    let out = gazeguide(&["run", "--scene", &scene("minimal"), "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "invalid tick rate");
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"id": "x", "duration_s": 5, "hazard": {"position": [1.5, 0.5], "severity": "Low"}, "distraction_point": [0.1, 0.1], "objects": []}"#).unwrap();
    let out = gazeguide(&["run", "--scene", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hazard.position out of range"));
    assert_eq!(gazeguide(&["run", "--scene", &scene("minimal"), "--agent", "sleepy"]).status.code(), Some(2));
    assert_eq!(gazeguide(&["sweep", "--scenes", scenes().to_str().unwrap(), "--seeds", "9..1"]).status.code(), Some(2));
}

#[test]
fn missing_file_is_a_runtime_error() {
    assert_eq!(gazeguide(&["run", "--scene", "/definitely/not/here.json"]).status.code(), Some(1));
}

#[test]
fn sweep_prints_csv() {
    let out = gazeguide(&["sweep", "--scenes", scenes().to_str().unwrap(), "--seeds", "1..2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(text.lines().count(), 1 + 3 * 2);
}

#[test]
fn compare_reports_medians() {
    let out = gazeguide(&["compare", "--scene", &scene("reference"), "--n", "5", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["guided_win_count"], 5);
    assert_eq!(summary["rows"].as_array().unwrap().len(), 5);
    assert_eq!(gazeguide(&["compare", "--scene", &scene("reference"), "--n", "0"]).status.code(), Some(2));
}

#[test]
fn saliency_dump_writes_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("fused.pgm");
    let out = gazeguide(&["saliency", "dump", "--scene", &scene("reference"), "--out", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let pgm = std::fs::read_to_string(&file).unwrap();
    let mut lines = pgm.lines();
    assert_eq!(lines.next(), Some("P2"));
    assert_eq!(lines.next(), Some("64 64"));
    assert_eq!(lines.next(), Some("255"));
    assert_eq!(lines.count(), 64);
    let base = gazeguide(&["saliency", "dump", "--scene", &scene("reference"), "--map", "base"]);
    assert_ne!(stdout(&base), pgm);
    let wps = gazeguide(&["saliency", "waypoints", "--scene", &scene("reference")]);
    let wps: serde_json::Value = serde_json::from_str(&stdout(&wps)).unwrap();
    assert_eq!(wps.as_array().unwrap().len(), 3);
}

#[test]
fn serve_rejects_bad_bind_address() {
    let out = Command::new(env!("CARGO_BIN_EXE_gazeguide"))
        .args(["serve", "--scenes", scenes().to_str().unwrap()])
        .env("GAZEGUIDE_BIND", "not-an-address")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
