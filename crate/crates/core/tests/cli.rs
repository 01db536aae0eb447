//! Smoke tests of the `summ` binary.

use std::path::Path;
use std::process::Command;

fn summ(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_summ"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = summ(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn data_labels_and_self_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    let labels = dir.path().join("labels.jsonl");
    ok(&["synth-data", "--n-docs", "30", "--vocab-size", "50", "--noise", "0", "--out", s(&data)]);
    assert!(ok(&["make-labels", "--data", s(&data), "--out", s(&labels)]).contains("labelled 30"));

    // the references scored against themselves
    let hyp = dir.path().join("hyp.jsonl");
    let text = std::fs::read_to_string(&data).unwrap();
    let recs: Vec<String> = text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            serde_json::json!({"id": v["id"], "summary": v["abstract"], "extract_indices": v["salient"]}).to_string()
        })
        .collect();
    std::fs::write(&hyp, recs.join("\n")).unwrap();
    let out = ok(&["evaluate", "--hyp", s(&hyp), "--ref", s(&data)]);
    assert!(out.contains("ROUGE-L   1.0000"), "{out}");
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\nbogus = 2\n").unwrap();
    let out = summ(&["run-experiment", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = Command::new(env!("CARGO_BIN_EXE_summ"))
        .args(["run-experiment", "--desk", "--out", s(&dir.path().join("y")), "--stage", "rl"])
        .env("SUMM_SEED", "not-a-number")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("SUMM_SEED"));
}

#[test]
fn help_lists_every_subcommand() {
    let out = ok(&["--help"]);
    for c in [
        "synth-data",
        "evaluate",
        "make-labels",
        "train-extractor",
        "extract",
        "train-abstractor",
        "rewrite",
        "train-rl",
        "plot-curve",
        "summarize",
        "benchmark",
        "run-experiment",
        "compare",
    ] {
        assert!(out.contains(c), "missing {c}");
    }
}
