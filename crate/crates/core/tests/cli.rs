use std::path::Path;
use std::process::Command;

use tableqa::retrieval::write_corpus;
use tableqa::synthetic::{entity_dataset, synthetic_corpus};
use tableqa::table::write_dataset;
use tableqa::Split;

fn tableqa(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tableqa"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn run_subcommand_writes_manifest_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut buf = Vec::new();
    write_dataset(&entity_dataset(16, Split::Train, 1), &mut buf).unwrap();
    std::fs::write(dir.path().join("train.jsonl"), &buf).unwrap();
    buf.clear();
    write_dataset(&entity_dataset(6, Split::Dev, 2), &mut buf).unwrap();
    std::fs::write(dir.path().join("dev.jsonl"), &buf).unwrap();
    buf.clear();
    write_corpus(&synthetic_corpus(20, 3), &mut buf).unwrap();
    std::fs::write(dir.path().join("corpus.jsonl"), &buf).unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "train = train.jsonl\ndev = dev.jsonl\ncorpus = corpus.jsonl\noutput_dir = out\nnode_dim = 8\nmsg_dim = 8\ntype_dim = 4\nepochs = 1\n",
    )
    .unwrap();

    let out = tableqa(&["run", "--config", "run.cfg", "--split", "dev", "--seed", "9"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 5);
    assert_eq!(manifest["config"]["seed"], 9);
    assert!(manifest["report"]["bleu4"].is_number());
    assert!(dir.path().join("out/report.dev.json").exists());
    assert!(dir.path().join("out/predictions.dev.jsonl").exists());

    let out = tableqa(&["eval", "--config", "run.cfg", "--split", "dev"], dir.path());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report, manifest["report"]);
}

#[test]
fn bad_config_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "seed = 1\nlayers = many\n").unwrap();
    let out = tableqa(&["ingest", "--config", "bad.cfg"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn remote_mode_without_endpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "train = train.jsonl\n").unwrap();
    let out = tableqa(&["predict", "--config", "run.cfg", "--mode", "remote"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("endpoint"));
}
