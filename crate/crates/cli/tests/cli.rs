//! End-to-end runs of the `lawforge` binary: scripted agent sessions, batch
//! evaluation, log replay and world-file handling.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

use lawforge_core::forcelaws::catalog::lookup;
use lawforge_core::protocol::{experiment_to_json, read_frame, write_frame};

const BIN: &str = env!("CARGO_BIN_EXE_lawforge");

fn lawforge(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("lawforge runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn frames(messages: &[Value]) -> Vec<u8> {
    let mut buf = Vec::new();
    for m in messages {
        write_frame(&mut buf, &m.to_string()).unwrap();
    }
    buf
}

/// Runs `serve` with `input` on stdin and returns every server message plus the exit status.
fn serve(args: &[&str], input: &[u8]) -> (Vec<Value>, Option<i32>) {
    let mut child = Command::new(BIN)
        .arg("serve")
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("serve starts");
    child.stdin.take().unwrap().write_all(input).unwrap();
    let output = child.wait_with_output().unwrap();
    let mut reader = BufReader::new(output.stdout.as_slice());
    let mut messages = Vec::new();
    while let Some(frame) = read_frame(&mut reader).unwrap() {
        messages.push(serde_json::from_str(&frame).unwrap());
    }
    (messages, output.status.code())
}

fn truth_finalize(world: &str, dir: &Path) -> Value {
    let path = dir.join(format!("{world}-truth.json"));
    let out = lawforge(&["truth-submission", "--world", world, "--out", path_arg(&path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let submission: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    json!({"kind": "finalize", "explanation": submission["explanation"], "law": submission["law"]})
}

fn experiment_frame(world: &str, case: usize) -> Value {
    let w = lookup(world).unwrap();
    json!({"kind": "experiment", "experiment": experiment_to_json(&w.held_out.cases[case].experiment)})
}

fn kinds(messages: &[Value]) -> Vec<&str> {
    messages.iter().map(|m| m["kind"].as_str().unwrap()).collect()
}

#[test]
fn scripted_oscillator_session_runs_to_a_valid_submission() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("session");
    let mut script: Vec<Value> = (0..17).map(|i| experiment_frame("oscillator", i % 3)).collect();
    script.push(truth_finalize("oscillator", tmp.path()));
    let (messages, code) = serve(
        &["--world", "oscillator", "--seed", "0", "--rounds", "16", "--out", path_arg(&out)],
        &frames(&script),
    );
    assert_eq!(code, Some(0));
    let kinds = kinds(&messages);
    assert_eq!(kinds.iter().filter(|k| **k == "data").count(), 16);
    assert_eq!(kinds[kinds.len() - 2], "error");
    assert_eq!(messages[messages.len() - 2]["code"], "budget_exhausted");
    assert_eq!(*kinds.last().unwrap(), "finalize");
    assert!(messages[0]["text"].as_str().unwrap().contains("Round 1 of 16"));
    assert!(out.join("submission.json").is_file());

    let replay = lawforge(&["replay", path_arg(&out)]);
    assert_eq!(replay.status.code(), Some(0), "{}", String::from_utf8_lossy(&replay.stdout));
}

#[test]
fn tampered_log_is_caught_by_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("session");
    let script = [experiment_frame("gravity", 0), experiment_frame("gravity", 1), truth_finalize("gravity", tmp.path())];
    let (_, code) = serve(&["--world", "gravity", "--out", path_arg(&out)], &frames(&script));
    assert_eq!(code, Some(0));

    let log_path = out.join("log.csv");
    let text = std::fs::read_to_string(&log_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    let x: f64 = fields[4].parse().unwrap();
    fields[4] = format!("{}", x + 5.0);
    lines[3] = fields.join(",");
    std::fs::write(&log_path, lines.join("\n") + "\n").unwrap();

    let replay = lawforge(&["replay", path_arg(&out)]);
    let report = String::from_utf8_lossy(&replay.stdout);
    assert_eq!(replay.status.code(), Some(1), "{report}");
    assert!(report.contains("row 3"), "{report}");
}

#[test]
fn random_mode_ignores_agent_experiments() {
    let tmp = tempfile::tempdir().unwrap();
    let script = [json!({"kind": "experiment", "experiment": {}})];
    let (messages, code) = serve(
        &["--world", "ether", "--mode", "random", "--out", path_arg(tmp.path())],
        &frames(&script),
    );
    assert_eq!(code, Some(1), "ending without finalize is a failure");
    assert_eq!(kinds(&messages), ["prompt", "data", "prompt"]);
    assert_eq!(messages[1]["experiment"]["measurement_times"], json!([0.5, 1.0, 2.0, 4.0, 8.0]));
}

#[test]
fn zero_rounds_is_a_usage_error() {
    let out = lawforge(&["serve", "--world", "oscillator", "--rounds", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_world_is_a_usage_error() {
    let out = lawforge(&["serve", "--world", "nowhere"]);
    assert_eq!(out.status.code(), Some(2));
}

fn write_manifest(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("manifest.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn read_dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "metadata.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn truth_submissions_pass_every_cell_and_rerun_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let worlds = ["coulomb_easy", "gravity"];
    for world in worlds {
        let finalize = truth_finalize(world, tmp.path());
        for seed in 0..5 {
            let cell = tmp.path().join("runs").join(world).join(format!("seed-{seed}"));
            let script = [experiment_frame(world, seed % 3), finalize.clone()];
            let seed = seed.to_string();
            let (_, code) = serve(&["--world", world, "--seed", &seed, "--out", path_arg(&cell)], &frames(&script));
            assert_eq!(code, Some(0));
        }
    }
    let manifest = write_manifest(
        tmp.path(),
        "model = \"truth\"\nworlds = [\"coulomb_easy\", \"gravity\"]\n",
    );
    let first = lawforge(&["eval", path_arg(&manifest)]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let eval_dir = tmp.path().join("eval");
    let results: Value = serde_json::from_str(&std::fs::read_to_string(eval_dir.join("results.json")).unwrap()).unwrap();
    let summary = &results["aggregate"]["models"][0];
    assert_eq!(summary["pass_at_k"][0]["k"], 1);
    assert_eq!(summary["pass_at_k"][0]["mean_percent"], 100.0);
    assert_eq!(results["cells"].as_array().unwrap().len(), 10);
    for name in ["report.md", "heatmap.csv", "violin.csv", "heatmap.svg", "violin.svg", "metadata.json"] {
        assert!(eval_dir.join(name).is_file(), "{name} missing");
    }
    let before = read_dir_files(&eval_dir);

    let second = lawforge(&["eval", path_arg(&manifest), "--jobs", "1"]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(read_dir_files(&eval_dir), before);
    assert_eq!(first.stdout, second.stdout);

    let table = lawforge(&["report", path_arg(&eval_dir.join("results.json"))]);
    assert_eq!(table.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&table.stdout).contains("truth"));
}

#[test]
fn manifest_without_worlds_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_manifest(tmp.path(), "model = \"m\"\nworlds = []\n");
    assert_eq!(lawforge(&["eval", path_arg(&manifest)]).status.code(), Some(2));
}

#[test]
fn missing_submissions_are_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = write_manifest(tmp.path(), "model = \"m\"\nworlds = [\"gravity\"]\nseeds = [0]\n");
    let out = lawforge(&["eval", path_arg(&manifest)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gravity/seed-0"));
}

#[test]
fn exported_worlds_validate_and_broken_files_do_not() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("worlds");
    let export = lawforge(&["worlds", "export", "--out", path_arg(&dir)]);
    assert!(export.status.success());
    let listed = String::from_utf8_lossy(&export.stdout).lines().count();
    assert_eq!(listed, 11);

    let check = lawforge(&["validate", path_arg(&dir)]);
    assert_eq!(check.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&check.stdout).matches("ok ").count(), 11);

    let gravity = dir.join("gravity.toml");
    let text = std::fs::read_to_string(&gravity).unwrap();
    std::fs::write(&gravity, text.replace("agent_slots = 1", "agent_slots = 3")).unwrap();
    let check = lawforge(&["validate", path_arg(&dir)]);
    assert_eq!(check.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&check.stdout).contains("agent_slots"));

    let all = lawforge(&["validate"]);
    assert_eq!(all.status.code(), Some(0));
}
