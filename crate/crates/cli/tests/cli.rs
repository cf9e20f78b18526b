use std::fs;
use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn pretext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pretext")).args(args).output().unwrap()
}

#[test]
fn train_writes_diagnostics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = pretext(&["train", "--mode", "viss", "--steps", "30", "--seed", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["steps"], 30);
    assert_eq!(summary, serde_json::from_str::<Value>(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap());
    let csv = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 31);
    assert!(csv.starts_with("step,"));
}

#[test]
fn train_rejects_bad_scales() {
    let o = pretext(&["train", "--steps", "5", "--r-t-scale", "-1"]);
    assert!(!o.status.success());
}

#[test]
fn build_and_rebuild_match() {
    let dir = tempfile::tempdir().unwrap();
    let mut ppm = b"P6\n3 2\n255\n".to_vec();
    ppm.extend(0u8..18);
    fs::write(dir.path().join("a.ppm"), ppm).unwrap();
    fs::write(
        dir.path().join("m.jsonl"),
        r#"{"id":"a","modality":"image","frames":"a.ppm","question":"How many?","answer":2,"task_kind":"numeric"}"#,
    )
    .unwrap();
    let run = |out: &str| {
        let o = pretext(&[
            "build",
            "--manifest",
            dir.path().join("m.jsonl").to_str().unwrap(),
            "--seed",
            "5",
            "--mode",
            "rl",
            "--out",
            dir.path().join(out).to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(dir.path().join(out).join("records.jsonl")).unwrap()
    };
    assert_eq!(run("x"), run("y"));
}

#[test]
fn build_reports_missing_manifest() {
    let o = pretext(&["build", "--manifest", "/nonexistent/m.jsonl", "--seed", "1", "--mode", "sft", "--out", "/tmp/unused"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/m.jsonl"));
}

#[test]
fn serve_requires_exactly_one_transport() {
    assert!(!pretext(&["serve"]).status.success());
    assert!(!pretext(&["serve", "--stdio", "--listen", "127.0.0.1:0"]).status.success());
}

#[test]
fn serve_honours_env_scales() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_pretext"))
        .args(["serve", "--stdio"])
        .env("VISS_R_F_SCALE", "0.25")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"id\":\"q\",\"mode\":\"vanilla\",\"raw_output\":\"<think>x</think><answer>4</answer>\",\"task\":{\"kind\":\"numeric\",\"ground_truth\":4}}\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    let resp: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(resp["breakdown"]["r_f"], 0.25);
    assert_eq!(resp["breakdown"]["total"], 1.25);

    let bad = Command::new(env!("CARGO_BIN_EXE_pretext"))
        .args(["serve", "--stdio"])
        .env("VISS_R_T_SCALE", "lots")
        .stdin(Stdio::null())
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
