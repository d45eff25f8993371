use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn nccz(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nccz"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NCCZ_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_WEAKTYPE: &str = r#"{"schema_version": 1, "grid": {"n": 1, "depth": 4, "d": 2}, "ensemble": 10}"#;

#[test]
fn check_passes() {
    let dir = TempDir::new().unwrap();
    let out = nccz(&["check"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("all checks passed"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.json", "{ not json");
    let out = nccz(&["weaktype", "--config", &cfg, "--output-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("docs/config.md"));
    assert!(!dir.path().join("out").exists());

    let cfg = write(dir.path(), "unknown.json", r#"{"bogus": 1}"#);
    let out = nccz(&["weaktype", "--config", &cfg, "--output-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());

    let cfg = write(dir.path(), "grid.json", r#"{"grid": {"n": 1, "depth": 0, "d": 1}}"#);
    let out = nccz(&["weaktype", "--config", &cfg, "--output-dir", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_config_and_unknown_subcommand_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = nccz(&["pseudoloc"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
    let out = nccz(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("reports").exists());
}

#[test]
fn report_files_seed_override_and_determinism() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "w.json", SMALL_WEAKTYPE);
    let run = |out_dir: &str| {
        let out = nccz(&["weaktype", "--config", &cfg, "--seed", "7", "--output-dir", out_dir], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(out_dir).join("weaktype.json")).unwrap()).unwrap();
        json
    };
    let mut a = run("a");
    let mut b = run("b");
    assert_eq!(a["seed"], 7);
    assert_eq!(a["config"]["seed"], 7);
    assert_eq!(a["schema_version"], 1);
    for v in [&mut a, &mut b] {
        v["wall_time_s"] = serde_json::Value::Null;
    }
    assert_eq!(a, b);
    for name in ["weaktype_summary.csv", "weaktype_members.csv"] {
        let x = fs::read_to_string(dir.path().join("a").join(name)).unwrap();
        let y = fs::read_to_string(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y);
        assert!(x.lines().count() > 1);
    }
    // no temporary files left behind
    assert!(fs::read_dir(dir.path().join("a"))
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn output_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "l.json", r#"{"m": [1, 2, 3, 4], "p": [2.0]}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_nccz"))
        .args(["lpgrowth", "--config", &cfg])
        .current_dir(dir.path())
        .env("NCCZ_OUTPUT_DIR", "from_env")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("from_env/lpgrowth.json").exists());
    assert!(dir.path().join("from_env/lpgrowth_norms.csv").exists());
}

#[test]
fn failing_verdict_exits_1() {
    let dir = TempDir::new().unwrap();
    // a stability factor of 1 demands identical maxima at both depths
    let cfg = write(
        dir.path(),
        "w.json",
        r#"{"grid": {"n": 1, "depth": 4, "d": 2}, "ensemble": 10, "tolerances": {"stability_factor": 1.0}}"#,
    );
    let out = nccz(&["weaktype", "--config", &cfg, "--output-dir", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("o/weaktype.json").exists());
}
