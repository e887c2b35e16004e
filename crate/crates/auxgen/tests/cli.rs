//! End-to-end runs of the command-line binary against the bundled
//! sample corpus: the train → evaluate path, prediction dumps, the
//! experiment drivers, and the usage-vs-runtime exit-code split.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_auxgen"))
}

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample.jsonl")
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary should launch");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("binary should launch").status.code().expect("no exit code")
}

const MODEL_ARGS: &[&str] =
    &["--d-model", "32", "--heads", "2", "--seed", "3", "--t2", "2", "--n-per-epoch", "100"];

#[test]
fn train_evaluate_generate_and_bench_complete_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let eval = dir.path().join("eval");
    let data = sample();

    let out = run_ok(bin()
        .args(["train", "--data"])
        .arg(&data)
        .arg("--out")
        .arg(&run)
        .args(MODEL_ARGS)
        .args(["--t1", "600", "--batch-size", "4", "--lr", "0.15"]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("best validation ppl"), "{stdout}");
    assert!(run.join("best.bin").exists());
    assert!(run.join("last.bin").exists());
    assert!(run.join("vocab.txt").exists());
    assert!(run.join("train_log.csv").exists());
    // the snapshot carries the build version and the effective keys
    let snap = std::fs::read_to_string(run.join("effective-config.txt")).unwrap();
    assert!(snap.starts_with("# auxgen "), "{snap}");
    assert!(snap.contains("d_model = 32"), "{snap}");

    let out = run_ok(bin()
        .args(["evaluate", "--data"])
        .arg(&data)
        .arg("--checkpoint")
        .arg(run.join("best.bin"))
        .arg("--out")
        .arg(&eval)
        .args(MODEL_ARGS)
        .arg("--model-embeddings"));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("perplexity"), "{table}");
    assert!(table.contains("non-comparable"), "model embeddings must be labeled");
    let csv = std::fs::read_to_string(eval.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(eval.join("effective-config.txt").exists());

    // predictions all parse and never contain the padding or mask markers
    let preds = std::fs::read_to_string(eval.join("predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 450);
    for line in preds.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["context", "reference", "candidate"] {
            assert!(v.get(key).is_some(), "missing {key} in {line}");
        }
        let cand = v["candidate"].as_str().unwrap();
        assert!(!cand.contains("[PAD]") && !cand.contains("[MASK]"), "{cand}");
    }

    // generate streams the same shape to stdout
    let out = run_ok(bin()
        .args(["generate", "--data"])
        .arg(&data)
        .arg("--checkpoint")
        .arg(run.join("best.bin"))
        .args(MODEL_ARGS));
    let stream = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stream.lines().count(), 450);
    serde_json::from_str::<serde_json::Value>(stream.lines().next().unwrap()).unwrap();

    // bench reports both decoding paths on the trained checkpoint
    let out = run_ok(bin()
        .args(["bench", "--data"])
        .arg(&data)
        .arg("--checkpoint")
        .arg(run.join("best.bin"))
        .args(MODEL_ARGS)
        .args(["--reps", "1", "--warmup", "0", "--max-len", "5"]));
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("ms/token"), "{report}");
    assert!(report.contains("speedup"), "{report}");
}

#[test]
fn prepare_reports_the_corpus_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("prep");
    let out = run_ok(bin()
        .args(["prepare", "--data"])
        .arg(sample())
        .arg("--out")
        .arg(&out_dir));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("200 lines"), "{stdout}");
    assert!(out_dir.join("vocab.txt").exists());
    assert!(out_dir.join("instances.jsonl").exists());
    assert!(out_dir.join("effective-config.txt").exists());
}

#[test]
fn usage_problems_exit_with_code_two() {
    // evaluate without a checkpoint is a usage error (clap)
    let code = exit_code(bin().args(["evaluate", "--data"]).arg(sample()).args(["--out", "/tmp/x"]));
    assert_eq!(code, 2);

    // a missing corpus file is a configuration error
    let dir = tempfile::tempdir().unwrap();
    let code = exit_code(bin()
        .args(["prepare", "--data", "/nonexistent/corpus.jsonl", "--out"])
        .arg(dir.path().join("p")));
    assert_eq!(code, 2);

    // an unknown config key is rejected before any work happens
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "d_modle = 32\n").unwrap();
    let code = exit_code(bin()
        .args(["train", "--config"])
        .arg(&conf)
        .args(["--data"])
        .arg(sample())
        .arg("--out")
        .arg(dir.path().join("t")));
    assert_eq!(code, 2);

    // an invalid flag value is a usage error too
    let code = exit_code(bin()
        .args(["train", "--data"])
        .arg(sample())
        .arg("--out")
        .arg(dir.path().join("t2"))
        .args(["--alpha0", "7.5"]));
    assert_eq!(code, 2);
}

#[test]
fn ablate_trains_the_requested_variants() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("abl");
    let out = run_ok(bin()
        .args(["ablate", "--data"])
        .arg(sample())
        .arg("--out")
        .arg(&out_dir)
        .args(["--d-model", "8", "--heads", "2", "--seed", "3"])
        .args(["--t1", "4", "--t2", "1", "--n-per-epoch", "2", "--batch-size", "2"])
        .args(["--sets", "wor,uor,mwr,mur"]));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("full"), "{table}");
    let csv = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header + full + one leave-out row: {csv}");
    assert!(lines[1].starts_with("full,"));
    assert!(lines[2].starts_with("-wor+uor+mwr+mur,"), "{csv}");
}

#[test]
fn depth_sweep_writes_both_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    run_ok(bin()
        .args(["depth-sweep", "--data"])
        .arg(sample())
        .arg("--out")
        .arg(&out_dir)
        .args(["--d-model", "8", "--heads", "2", "--seed", "3"])
        .args(["--t1", "4", "--t2", "1", "--n-per-epoch", "2", "--batch-size", "2"])
        .args(["--depths", "1,2"]));
    let csv = std::fs::read_to_string(out_dir.join("depth_sweep.csv")).unwrap();
    // two depths, each with and without the auxiliary tasks
    assert_eq!(csv.lines().count(), 5, "{csv}");
    assert!(csv.contains("1,true") && csv.contains("1,false"), "{csv}");
    assert!(csv.contains("2,true") && csv.contains("2,false"), "{csv}");
}
