use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vanet-privacy")).args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const CONFIG: &str = r#"{
    "name": "cli",
    "traces": {"kind": "file", "path": "traces.csv"},
    "scheme": {"kind": "caps", "min_pseudonym_time_s": 20, "max_pseudonym_time_s": 60},
    "monte_carlo": {"draws": 2000, "shards": 2},
    "repetitions": 2
}"#;

#[test]
fn gen_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = cli(&["gen", "--vehicles", "20", "--duration", "120", "--seed", "3", "-o", "traces.csv"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("traces.csv")).unwrap();
    assert!(csv.starts_with("time,id,x,y"));

    std::fs::write(d.join("cli.json"), CONFIG).unwrap();
    let o = cli(&["run", "cli.json", "-o", "out"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["repetitions"], 2);
    for f in ["manifest.json", "result.json", "config.json", "rep-0/events.jsonl", "rep-1/tracks.jsonl", "rep-1/traceability.csv"] {
        assert!(d.join("out/cli").join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("out/cli/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let o = cli(&["report", "out/cli/result.json"], d);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("repetition,seed,scheme"));

    let o = cli(&["run", "cli.json", "--profile"], d);
    assert_eq!(code(&o), 0);
    let p: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(p["mean_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_and_select() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sweep = r#"{
        "base": {
            "name": "sw",
            "traces": {"kind": "synthetic", "vehicles": 15, "blocks_x": 2, "blocks_y": 2, "duration_s": 90},
            "scheme": {"kind": "cads"},
            "monte_carlo": {"draws": 2000, "shards": 1}
        },
        "grid": {"max_silence_s": [7, 11], "neighborhood_radius_m": [50]}
    }"#;
    std::fs::write(d.join("sweep.json"), sweep).unwrap();
    let o = cli(&["sweep", "sweep.json", "-o", "runs"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("runs/sw/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let o = cli(&["select-params", "runs/sw/sweep.json", "--qos-floor", "0", "--trace-cap", "100"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["table"]["normal"]["sparse"]["max_silence_s"].is_number());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&cli(&["--help"], d)), 0);
    assert_eq!(code(&cli(&["frobnicate"], d)), 1);
    assert_eq!(code(&cli(&["run", "missing.json"], d)), 1);
    std::fs::write(d.join("bad.json"), r#"{"repetitions": 0}"#).unwrap();
    assert_eq!(code(&cli(&["run", "bad.json"], d)), 1);
    std::fs::write(d.join("gap.csv"), "time,id,x,y\n0,a,0,0\n2,a,5,0\n").unwrap();
    std::fs::write(d.join("gap.json"), r#"{"traces": {"kind": "file", "path": "gap.csv"}}"#).unwrap();
    assert_eq!(code(&cli(&["run", "gap.json"], d)), 1);

    // output location is a regular file: runtime failure
    std::fs::write(d.join("ok.json"), r#"{"traces": {"kind": "synthetic", "vehicles": 5, "duration_s": 30}, "monte_carlo": {"draws": 100}}"#).unwrap();
    std::fs::write(d.join("blocker"), "").unwrap();
    let o = cli(&["run", "ok.json", "-o", "blocker"], d);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}
