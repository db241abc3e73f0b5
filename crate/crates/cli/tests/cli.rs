use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tea_core::tkg::{parse_dataset, write_dataset};

fn tea(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tea"))
        .args(args)
        .env_remove("TEA_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn quick_train(out: &Path, extra: &[&str]) -> Output {
    let data = toy();
    let mut args = vec![
        "train", "--data", s(&data), "--out", s(out), "--repeats", "1", "--seed", "7", "--epochs", "30", "--dim", "8",
        "--no-timing",
    ];
    args.extend_from_slice(extra);
    tea(&args)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

fn json_rows(stdout: &str) -> Vec<serde_json::Value> {
    serde_json::from_str::<Vec<serde_json::Value>>(stdout).unwrap()
}

#[test]
fn train_smoke_writes_checkpoint_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("runs");
    let stdout = ok(&quick_train(&out, &["--mode", "time-aware"]));
    assert!(stdout.contains("hits1"));
    for f in ["checkpoint.tea", "history.csv", "report.json", "report.csv"] {
        assert!(out.join("run-0").join(f).is_file(), "{f}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("metric,space,direction,partition,mean,std,runs\n"));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["seeds"], serde_json::json!([7]));
    let artifacts: Vec<&str> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["path"].as_str().unwrap())
        .collect();
    assert!(artifacts.contains(&"run-0/checkpoint.tea"));
    assert!(!manifest["dataset_checksums"].as_array().unwrap().is_empty());
}

#[test]
fn time_unaware_mode_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("tu");
    ok(&quick_train(&out, &["--mode", "time-unaware"]));
    let ckpt = fs::read_to_string(out.join("run-0/checkpoint.tea")).unwrap();
    assert!(ckpt.lines().any(|l| l == "mode time-unaware"));
    assert!(out.join("run-0/report.json").is_file());
}

#[test]
fn missing_seed_file_exits_2_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("broken");
    fs::create_dir_all(&data).unwrap();
    for (name, bytes) in files(&toy()) {
        fs::write(data.join(name), bytes).unwrap();
    }
    fs::remove_file(data.join("sup_pairs")).unwrap();
    let out = tmp.path().join("runs");
    let res = tea(&["train", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("sup_pairs"));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"failed\""));
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "dropout = 1.5\n").unwrap();
    let res = quick_train(&tmp.path().join("r"), &["--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(2));
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let res = quick_train(&tmp.path().join("r"), &["--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(2));
    let res = tea(&["train", "--data", s(&toy()), "--precision", "f16"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn config_file_values_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "dim = 6\nmargin = 2\nneg_per_pos = 3\n").unwrap();
    let out = tmp.path().join("r");
    let data = toy();
    ok(&tea(&[
        "train", "--data", s(&data), "--out", s(&out), "--repeats", "1", "--epochs", "3", "--config", s(&cfg), "--margin",
        "0.5", "--self-loops", "off",
    ]));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["dim"], 6);
    assert_eq!(m["config"]["margin"], 0.5);
    assert_eq!(m["config"]["neg_per_pos"], 3);
    assert_eq!(m["config"]["self_loops"], false);
}

#[test]
fn data_root_env_resolves_relative_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let root = toy().parent().unwrap().to_path_buf();
    let res = Command::new(env!("CARGO_BIN_EXE_tea"))
        .args(["train", "--data", "toy", "--out", s(&out), "--repeats", "1", "--epochs", "2", "--dim", "4"])
        .env("TEA_DATA_ROOT", &root)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    ok(&res);
}

#[test]
fn eval_reports_both_spaces() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    ok(&quick_train(&out, &[]));
    let ckpt = out.join("run-0/checkpoint.tea");
    let rows = json_rows(&ok(&tea(&["eval", "--checkpoint", s(&ckpt), "--data", s(&toy()), "--no-timing"])));
    assert_eq!(rows.len(), 6);
    for space in ["l1", "csls"] {
        for metric in ["mrr", "hits1", "hits10"] {
            assert!(rows.iter().any(|r| r["space"] == space && r["metric"] == metric));
        }
    }
    // the checkpoint reproduces the training run's own evaluation
    let trained: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(out.join("run-0/report.json")).unwrap()).unwrap();
    assert_eq!(trained, rows);
}

#[test]
fn eval_explicit_csls_matches_default() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    ok(&quick_train(&out, &[]));
    let ckpt = out.join("run-0/checkpoint.tea");
    let data = toy();
    let default = json_rows(&ok(&tea(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--no-timing"])));
    let explicit = json_rows(&ok(&tea(&[
        "eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--no-timing", "--metric", "csls", "--k-csls", "10",
    ])));
    let default_csls: Vec<_> = default.into_iter().filter(|r| r["space"] == "csls").collect();
    assert_eq!(default_csls, explicit);
}

#[test]
fn eval_partition_adds_highly_and_lowly_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("hybrid");
    ok(&tea(&[
        "forge", "synth", "--entities", "40", "--seeds", "12", "--non-temporal-ratio", "0.3", "--seed", "4", "--out", s(&data),
    ]));
    let out = tmp.path().join("r");
    ok(&tea(&["train", "--data", s(&data), "--out", s(&out), "--repeats", "1", "--epochs", "20", "--dim", "8"]));
    let ckpt = out.join("run-0/checkpoint.tea");
    let report = tmp.path().join("report");
    let rows = json_rows(&ok(&tea(&[
        "eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--partition", "--metric", "csls", "--out", s(&report),
    ])));
    let parts: Vec<&str> = rows.iter().map(|r| r["partition"].as_str().unwrap()).collect();
    assert_eq!(parts.iter().filter(|p| **p == "all").count(), 3);
    assert_eq!(parts.iter().filter(|p| **p == "highly").count(), 3);
    assert_eq!(parts.iter().filter(|p| **p == "lowly").count(), 3);
    assert!(report.join("report.csv").is_file());
    assert!(report.join("manifest.json").is_file());
}

#[test]
fn eval_mismatched_dataset_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    ok(&quick_train(&out, &[]));
    let other = tmp.path().join("other");
    ok(&tea(&["forge", "synth", "--entities", "30", "--out", s(&other)]));
    let res = tea(&["eval", "--checkpoint", s(&out.join("run-0/checkpoint.tea")), "--data", s(&other)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("mismatch"));
}

#[test]
fn forge_synth_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("synth");
    ok(&tea(&["forge", "synth", "--entities", "60", "--planted", "3", "--seed", "1", "--out", s(&dir)]));
    let ds = parse_dataset(&dir).unwrap();
    let again = tmp.path().join("again");
    write_dataset(&ds, &again).unwrap();
    for name in tea_core::tkg::DATASET_FILES {
        assert_eq!(fs::read(dir.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
    let manifest = fs::read_to_string(dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"planted_test_pairs\""));
}

#[test]
fn forge_split_hits_requested_overlap() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    ok(&tea(&["forge", "synth", "--entities", "200", "--seeds", "20", "--ratio", "1", "--out", s(&src)]));
    let out = tmp.path().join("split");
    let stdout = ok(&tea(&["forge", "split", "--source", s(&src), "--ratio", "0.5", "--seeds", "20", "--out", s(&out)]));
    assert!(stdout.contains("overlap\t0.5000"));
    let stats = fs::read_to_string(out.join("stats.txt")).unwrap();
    assert!(stats.lines().any(|l| l == "overlap\t0.5000"));
    parse_dataset(&out).unwrap();
}

#[test]
fn forge_split_reads_labeled_quads() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("quads.tsv");
    let mut text = String::new();
    for i in 0..40 {
        text.push_str(&format!("e{i}\tr{}\te{}\t2005-01-{:02}\n", i % 3, (i + 1) % 40, i % 28 + 1));
        text.push_str(&format!("e{i}\tr{}\te{}\tunknown\n", (i + 1) % 3, (i + 7) % 40));
    }
    fs::write(&file, text).unwrap();
    let out = tmp.path().join("split");
    ok(&tea(&["forge", "split", "--source", s(&file), "--ratio", "0.5", "--seeds", "5", "--out", s(&out)]));
    parse_dataset(&out).unwrap();
}

#[test]
fn forge_infeasible_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let res = tea(&["forge", "synth", "--entities", "10", "--planted", "5", "--out", s(&tmp.path().join("x"))]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn forge_stats_prints_table_layout() {
    let stdout = ok(&tea(&["forge", "stats", "--data", s(&toy()), "--dim", "100"]));
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "Dataset\t|E1|\t|E2|\t|R1|\t|R2|\t|T*|\t|Q1|\t|Q2|\t|P|\t|S|");
    assert_eq!(lines[1].split('\t').count(), 10);
    assert!(lines[1].starts_with("toy\t"));
    assert!(lines.iter().any(|l| l.starts_with("params\t")));
}

#[test]
fn fixed_seed_single_thread_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        ok(&quick_train(out, &["--threads", "1", "--repeats", "2", "--emit-plots", "--eval-every", "10"]));
    }
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.iter().any(|(n, _)| n == "run-1/loss.dat"));
    assert_eq!(fa, fb);

    // stats.txt is labelled with the directory name, so both outputs share it
    let (x, y) = (tmp.path().join("x/synth"), tmp.path().join("y/synth"));
    for out in [&x, &y] {
        ok(&tea(&["forge", "synth", "--planted", "2", "--seed", "9", "--threads", "1", "--out", s(out)]));
    }
    assert_eq!(files(&x), files(&y));
}

#[test]
fn parallel_runs_match_sequential_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("seq"), tmp.path().join("par"));
    ok(&quick_train(&a, &["--repeats", "3"]));
    ok(&quick_train(&b, &["--repeats", "3", "--parallel-runs", "3"]));
    assert_eq!(files(&a), files(&b));
}

#[test]
fn f64_precision_trains() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    ok(&quick_train(&out, &["--precision", "f64"]));
    let ckpt = fs::read_to_string(out.join("run-0/checkpoint.tea")).unwrap();
    assert!(ckpt.lines().any(|l| l == "precision f64"));
    let rows = json_rows(&ok(&tea(&["eval", "--checkpoint", s(&out.join("run-0/checkpoint.tea")), "--data", s(&toy())])));
    assert_eq!(rows.len(), 6);
}
