use std::path::Path;
use std::process::Command;

fn bosonic() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bosonic"));
    c.env_remove("BOSONIC_OUTPUT_DIR");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = write(dir.path(), "a.json", "{ not json");
    assert_eq!(bosonic().arg("validate").arg(&bad_json).status().unwrap().code(), Some(2));
    let no_seed = write(dir.path(), "b.json", r#"{"kind":"kmeans","shots":700}"#);
    let out = bosonic().arg("validate").arg(&no_seed).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    let ok = write(dir.path(), "c.json", r#"{"kind":"ramsey_stark","points":5}"#);
    assert_eq!(bosonic().arg("validate").arg(&ok).status().unwrap().code(), Some(0));
    let missing = dir.path().join("nope.json");
    assert_eq!(bosonic().arg("run").arg(&missing).status().unwrap().code(), Some(2));
    let unwritable = write(dir.path(), "d.json", r#"{"kind":"ramsey_stark","points":5}"#);
    let status = bosonic().arg("run").arg(&unwritable).arg("-o").arg(&unwritable).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn run_writes_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ramsey.json", r#"{"kind":"ramsey_stark","points":21}"#);
    let out_dir = dir.path().join("out");
    let status = bosonic().arg("run").arg(&cfg).env("BOSONIC_OUTPUT_DIR", &out_dir).status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_dir.join("figS2b_ramsey.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "ramsey_stark");
    assert_eq!(manifest["config"]["points"], 21);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["timestamp_unix"].as_u64().unwrap() > 0);
}

#[test]
fn output_flag_beats_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", r#"{"kind":"synthesize","target":{"family":"fock","level":2}}"#);
    let env_dir = dir.path().join("env");
    let flag_dir = dir.path().join("flag");
    let status = bosonic()
        .args(["run"])
        .arg(&cfg)
        .arg("--output-dir")
        .arg(&flag_dir)
        .env("BOSONIC_OUTPUT_DIR", &env_dir)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(flag_dir.join("schedule.json").exists());
    assert!(!env_dir.exists());
}

#[test]
fn dataset_and_schedule_subcommands() {
    let out = bosonic().args(["dataset", "print"]).output().unwrap();
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 15);
    assert_eq!(rows[0]["id"], "sqz1");

    let out = bosonic()
        .args(["schedule", "show", r#"{"family":"features","x":[1,1,1,1]}"#])
        .output()
        .unwrap();
    assert!(out.status.success());
    let sched: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(sched["pulses"].as_array().unwrap().len(), 6);

    let out = bosonic().args(["schedule", "show", r#"{"family":"bogus"}"#]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
