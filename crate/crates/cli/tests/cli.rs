use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_oversight");

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn updating() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

fn run(config: &Path, args: &[&str]) -> Output {
    Command::new(BIN).arg("--config").arg(config).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("study.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn status(dir: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(dir.join("out/status").join(format!("{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn check_golden(actual: &[u8], path: &Path) {
    if updating() {
        std::fs::write(path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}; rerun with UPDATE_GOLDEN=1", path.display()));
    assert!(actual == expected.as_slice(), "{} differs from the golden file", path.display());
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_reproduces_fixture_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "seed = 7\n");
    let out = run(&config, &["simulate"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let log = std::fs::read(dir.path().join("out/events.jsonl")).unwrap();
    check_golden(&log, &fixtures().join("events.jsonl"));
    assert_eq!(status(dir.path(), "simulate")["ok"], true);
}

fn analyze_config(dir: &Path) -> PathBuf {
    let log = fixtures().join("events.jsonl");
    write_config(
        dir,
        &format!("seed = 11\n[study]\nevent_log = {:?}\n[analysis.report]\nresamples = 500\n", log.display().to_string()),
    )
}

#[test]
fn analyze_matches_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = analyze_config(dir.path());
    let out = run(&config, &["analyze"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json = std::fs::read(dir.path().join("out/report.json")).unwrap();
    let text = std::fs::read(dir.path().join("out/report.txt")).unwrap();
    check_golden(&json, &golden().join("report.json"));
    check_golden(&text, &golden().join("report.txt"));
    assert_eq!(status(dir.path(), "analyze")["ok"], true);
}

#[test]
fn analyze_is_idempotent_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let config = analyze_config(dir.path());
    let read = || std::fs::read(dir.path().join("out/report.json")).unwrap();
    assert!(run(&config, &["analyze"]).status.success());
    let first = read();
    assert!(run(&config, &["analyze"]).status.success());
    assert_eq!(read(), first);
    assert!(run(&config, &["--seed", "12", "analyze"]).status.success());
    assert_ne!(read(), first, "a different seed should move the bootstrap intervals");
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "seed = 1\n[corpus]\nper_cel = 6\n");
    let out = run(&config, &["corpus", "build"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("config_invalid"), "{}", stderr(&out));
    assert!(stderr(&out).contains("per_cel"));
}

#[test]
fn nonzero_report_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[analysis.report]\nseed = 3\n");
    assert_eq!(run(&config, &["analyze"]).status.code(), Some(2));
}

#[test]
fn missing_event_log_fails_with_status_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "seed = 1\n");
    let out = run(&config, &["analyze"]);
    assert_eq!(out.status.code(), Some(1));
    let s = status(dir.path(), "analyze");
    assert_eq!(s["ok"], false);
    assert!(s["error"].as_str().unwrap().starts_with("subcommand_failed"));
}

const TOPIC_WORDS: [&str; 9] =
    ["energy", "emission", "policy", "weather", "ocean", "economy", "health", "biodiversity", "city"];

fn stratified_questions(per_cell: usize) -> String {
    let mut lines = String::new();
    for word in TOPIC_WORDS {
        for i in 0..per_cell {
            lines.push_str(&format!("Why does {word} matter in region {i}?\n"));
            lines.push_str(&format!("What is {word} like in region {i}?\n"));
        }
    }
    lines
}

#[test]
fn corpus_build_samples_six_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("questions.txt"), stratified_questions(8)).unwrap();
    let config = write_config(dir.path(), "seed = 5\n[corpus]\ninput = \"questions.txt\"\n");
    let out = run(&config, &["corpus", "build", "--per-cell", "6"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let sample = std::fs::read_to_string(dir.path().join("out/sample.jsonl")).unwrap();
    assert_eq!(sample.lines().count(), 108);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/corpus.json")).unwrap()).unwrap();
    assert_eq!(report["input"], 144);
    assert_eq!(report["sampled"], 108);
    assert_eq!(report["cells"].as_array().unwrap().len(), 18);

    assert!(run(&config, &["corpus", "build", "--per-cell", "6"]).status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("out/sample.jsonl")).unwrap(), sample);
}

#[test]
fn corpus_build_reports_short_cells() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("questions.txt"), stratified_questions(4)).unwrap();
    let config = write_config(dir.path(), "[corpus]\ninput = \"questions.txt\"\n");
    let out = run(&config, &["corpus", "build"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/corpus.json")).unwrap()).unwrap();
    assert_eq!(report["sampled"], 72);
    assert!(!report["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn unreachable_provider_fails_but_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("questions.txt"),
        "Why is sea level rising?\nHow do glaciers respond to warming?\n",
    )
    .unwrap();
    let config = write_config(
        dir.path(),
        r#"
[llm]
max_attempts = 1
retry_base_ms = 1

[[providers]]
id = "remote"
kind = "openai"
endpoint = "http://127.0.0.1:1/v1"
model = "m"
timeout_secs = 2

[pipeline]
questions = "questions.txt"
aux_provider = "remote"
systems = [{ id = "sys", provider_id = "remote" }]
"#,
    );
    let out = run(&config, &["pipeline", "run"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    let manifest = std::fs::read_to_string(dir.path().join("out/manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 2);
    for line in manifest.lines() {
        let bundle: Value = serde_json::from_str(line).unwrap();
        assert_eq!(bundle["status"], "failed", "{line}");
    }
    let s = status(dir.path(), "pipeline_run");
    assert_eq!(s["ok"], false);
    assert_eq!(s["details"]["failed"], 2);
    assert_eq!(s["details"]["per_bundle"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_api_key_variable_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("questions.txt"), "Why is sea level rising?\n").unwrap();
    let config = write_config(
        dir.path(),
        r#"
[[providers]]
id = "remote"
kind = "openai"
endpoint = "http://127.0.0.1:1/v1"
model = "m"
api_key_env = "OVERSIGHT_TEST_KEY_THAT_IS_NOT_SET"

[pipeline]
questions = "questions.txt"
aux_provider = "remote"
systems = [{ id = "sys", provider_id = "remote" }]
"#,
    );
    assert_eq!(run(&config, &["answers", "generate"]).status.code(), Some(2));
}

#[test]
fn validate_reports_detection_rates() {
    let dir = tempfile::tempdir().unwrap();
    let log = fixtures().join("events.jsonl");
    let seeded = r#"[
        {"answer_id": "q000__system-b", "dimension": "accuracy", "issue": "incorrect"},
        {"answer_id": "q001__system-b", "dimension": "style", "issue": "too_long"}
    ]"#;
    std::fs::write(dir.path().join("seeded.json"), seeded).unwrap();
    let config = write_config(
        dir.path(),
        &format!("[study]\nevent_log = {:?}\n[validate]\nseeded = \"seeded.json\"\nstudies = [\"synthetic\"]\n", log.display().to_string()),
    );
    let out = run(&config, &["validate"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/validation.json")).unwrap()).unwrap();
    assert_eq!(v["items"], 2);
    let (any, maj, all) = (v["any"].as_f64().unwrap(), v["majority"].as_f64().unwrap(), v["all"].as_f64().unwrap());
    assert!((0.0..=100.0).contains(&any));
    assert!(any >= maj && maj >= all);
}
