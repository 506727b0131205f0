mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::quick_config;
use psla::metrics::EvalReport;
use psla::model::Architecture;

fn psla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psla")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, arch: Architecture, epochs: usize) -> String {
    let cfg = quick_config(&dir.join("run"), arch, epochs);
    let p = dir.join("config.toml");
    fs::write(&p, cfg.to_toml()).unwrap();
    p.display().to_string()
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    fs::write(&p, "seed = 0\n[train]\nepochs = 'many'\n").unwrap();
    let o = psla(&["train", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_config_file_exits_with_one() {
    let o = psla(&["train", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_writes_a_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, "num_classes = 4\nnum_samples = 50\nimbalance_ratio = 5.0\nfeature_shape = { time_frames = 8, freq_bins = 4 }\n").unwrap();
    let out = dir.path().join("corpus");
    let table = stdout(&psla(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(table.contains("counts"));
    let c = psla::corpus::read_corpus(&out).unwrap();
    assert_eq!((c.len(), c.num_classes()), (50, 4));
}

#[test]
fn train_eval_coverage_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), Architecture::Attention, 2);
    let summary: serde_json::Value = serde_json::from_str(&stdout(&psla(&["train", "--config", &cfg]))).unwrap();
    assert_eq!(summary["epochs"], 2);

    let run = dir.path().join("run");
    let classes = dir.path().join("classes.csv");
    let report = stdout(&psla(&[
        "eval",
        "--run",
        run.to_str().unwrap(),
        "--checkpoint",
        "epoch_002",
        "--classes-csv",
        classes.to_str().unwrap(),
    ]));
    let logged = fs::read_to_string(run.join("eval/epoch_002.json")).unwrap();
    assert_eq!(EvalReport::from_json(&report).unwrap(), EvalReport::from_json(&logged).unwrap());
    assert!(fs::read_to_string(&classes).unwrap().lines().count() == 6);

    let cov = stdout(&psla(&["coverage", "--config", &cfg, "--epochs", "3"]));
    assert_eq!(cov.lines().count(), 4);

    let manifest = dir.path().join("committee.tsv");
    fs::write(&manifest, format!("# tag\trun\na\t{}\tlast\n", run.display())).unwrap();
    let out = dir.path().join("agg");
    let csv = stdout(&psla(&[
        "aggregate",
        "--committee",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert!(csv.starts_with("members,"));
    assert!(out.join("members.csv").exists());
}

#[test]
fn ablate_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), Architecture::Linear, 1);
    let csv = stdout(&psla(&["ablate", "--config", &cfg, "--toggles", "mixup,masking", "--seeds", "0,1"]));
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "variant,mean,sd,n");
    assert_eq!(rows.len(), 4);
}

#[test]
fn enhance_without_teacher_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), Architecture::Linear, 1);
    let o = psla(&["enhance", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}
