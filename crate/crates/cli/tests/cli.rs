use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wikistance"))
}

fn smoke_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke")
}

/// Copies the smoke fixture into `dir` with a two-epoch schedule.
fn quick_config(dir: &Path) -> PathBuf {
    for f in ["train.csv", "validation.csv", "test.csv", "knowledge.jsonl"] {
        fs::copy(smoke_dir().join(f), dir.join(f)).unwrap();
    }
    let text = fs::read_to_string(smoke_dir().join("smoke.toml"))
        .unwrap()
        .replace("max_epochs = 40", "max_epochs = 2")
        .replace("patience = 15", "patience = 2")
        .replace("../../runs/smoke", "run");
    let path = dir.join("smoke.toml");
    fs::write(&path, text).unwrap();
    path
}

fn text(o: &Output) -> (String, String) {
    (String::from_utf8_lossy(&o.stdout).into_owned(), String::from_utf8_lossy(&o.stderr).into_owned())
}

#[test]
fn run_evaluate_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    let (stdout, stderr) = text(&out);
    assert!(out.status.success(), "{stderr}");
    assert!(stdout.contains("WS-BERT-Dual"));
    let run = dir.path().join("run");
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("provenance.json")).unwrap()).unwrap();
    assert!(prov["invocation"].as_array().unwrap().iter().any(|a| a == "run"));
    let before = fs::read_to_string(run.join("report.json")).unwrap();

    let out = bin().args(["evaluate", "--run"]).arg(&run).output().unwrap();
    assert!(out.status.success(), "{}", text(&out).1);
    assert!(text(&out).0.starts_with("all: n=16"));
    assert_eq!(fs::read_to_string(run.join("report.json")).unwrap(), before);

    let out = bin().arg("table").arg(&run).arg(run.join("report.json")).arg("--avg").arg("none").output().unwrap();
    let (_, stderr) = text(&out);
    assert!(!out.status.success());
    assert!(stderr.starts_with("error [table]"), "{stderr}");

    let out = bin().arg("table").arg(&run).output().unwrap();
    let (stdout, _) = text(&out);
    assert!(out.status.success());
    assert!(stdout.lines().next().unwrap().ends_with("Avg."));
}

#[test]
fn train_skips_the_test_split() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let run = dir.path().join("elsewhere");
    let out = bin().args(["train", "--config"]).arg(&cfg).arg("--out").arg(&run).output().unwrap();
    assert!(out.status.success(), "{}", text(&out).1);
    assert!(run.join("checkpoint/model.safetensors").is_file());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 0);
}

#[test]
fn dump_streams_shows_both_streams() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let out = bin().args(["run", "--dump-streams", "2", "--config"]).arg(&cfg).output().unwrap();
    let (stdout, stderr) = text(&out);
    assert!(out.status.success(), "{stderr}");
    assert_eq!(stdout.matches("stream 0: ").count(), 2);
    assert_eq!(stdout.matches("stream 1: ").count(), 2);
    assert!(stdout.contains("Bernie Sanders"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn offline_fetch_reports_uncached_targets() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("k.jsonl");
    fs::copy(smoke_dir().join("knowledge.jsonl"), &cache).unwrap();
    let targets = dir.path().join("targets.txt");
    fs::write(&targets, "# politicians\nDonald Trump\nElizabeth Warren\n").unwrap();
    let out = bin().args(["knowledge", "fetch", "--offline", "--targets"]).arg(&targets).arg("--cache").arg(&cache).output().unwrap();
    let (stdout, stderr) = text(&out);
    assert!(!out.status.success());
    assert!(stdout.contains("resolved\tDonald Trump\tDonald Trump"));
    assert!(stdout.contains("failed\tElizabeth Warren"));
    assert!(stderr.contains("error [knowledge]"), "{stderr}");
}

#[test]
fn invalid_config_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let broken = fs::read_to_string(&cfg).unwrap().replace("variant = \"dual\"", "variant = \"single\"");
    fs::write(&cfg, broken).unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    let (_, stderr) = text(&out);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr.starts_with("error [config]"), "{stderr}");
}
