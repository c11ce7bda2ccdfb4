use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/toy")
        .join(name)
        .display()
        .to_string()
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_predictability"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
}

fn base() -> Vec<String> {
    vec![
        "--stimuli".into(),
        toy("stimuli.csv"),
        "--cloze".into(),
        toy("cloze.jsonl"),
        "--rt".into(),
        toy("rt.csv"),
        "--ngram".into(),
        toy("ngram.json"),
        "--freq".into(),
        toy("freq.csv"),
        "--measure".into(),
        "SPR".into(),
    ]
}

#[test]
fn missing_inputs_are_listed_and_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["exp3", "--stimuli", &toy("stimuli.csv")], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for flag in ["--cloze", "--rt", "--dump or --ngram", "--embeddings"] {
        assert!(err.contains(flag), "{err}");
    }
}

#[test]
fn two_providers_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = base();
    args.extend(["--dump".into(), toy("ngram.json")]);
    let mut a: Vec<&str> = vec!["exp1"];
    a.extend(args.iter().map(String::as_str));
    let out = run(&a, dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_file_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["grid", "--stimuli", "/nonexistent.csv", "--cloze", "x", "--rt", "y"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn partial_failure_writes_outputs_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut a: Vec<&str> = vec!["exp2", "--hypothesis", "h3", "--threshold", "1e4,1e15"];
    let args = base();
    a.extend(args.iter().map(String::as_str));
    let out = run(&a, dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.lines().any(|l| l.contains(",ok")));
    assert!(summary.lines().any(|l| l.contains("failed:")));
    let provenance = std::fs::read_to_string(dir.path().join("provenance.txt")).unwrap();
    assert!(provenance.contains("partial failure"));
}

#[test]
fn correlate_without_reading_times() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "correlate",
            "--stimuli",
            &toy("stimuli.csv"),
            "--cloze",
            &toy("cloze.jsonl"),
            "--ngram",
            &toy("ngram.json"),
            "--embeddings",
            &toy("embeddings.pdem"),
            "--resamples",
            "200",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("correlations.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("predictor,r,ci_low,ci_high,n"));
    let predictors: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(predictors, ["lm", "lm_uncorrected", "h1", "h2_k80", "sa_cloze", "sa_lm"]);
}
