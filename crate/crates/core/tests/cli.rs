use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use codingtree::entropy::{structural_entropy, TreeFile};
use codingtree::graphio::read_graph;
use codingtree::learner::{Checkpoint, ModelDims, Pool, TrainConfig, TreeModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codingtree"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

/// Graphs for the full fixture corpus, plus SEMA trees of height 2.
fn staged(dir: &Path) -> (PathBuf, PathBuf) {
    let manifest = fixtures().join("manifest.jsonl");
    let out = run(&["build-graphs", "--manifest", s(&manifest), "--out-dir", s(&dir.join("g"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let graphs = dir.join("g/manifest.jsonl");
    let trees = dir.join("t");
    let out = run(&["build-trees", "--graphs", s(&graphs), "--height", "2", "--out-dir", s(&trees)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (graphs, trees)
}

#[test]
fn build_graphs_writes_one_file_per_document() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "build-graphs",
        "--manifest",
        s(&fixtures().join("manifest3.jsonl")),
        "--out-dir",
        s(dir.path()),
        "--workers",
        "2",
    ]);
    assert!(out.status.success());
    assert_eq!(json(&out)["written"], 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("built 3 graphs, 0 failed"));
    assert_eq!(fs::read_dir(dir.path().join("graphs")).unwrap().count(), 3);
    let manifest = fs::read_to_string(dir.path().join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 3);
    assert!(manifest.contains("\"path\":\"graphs/doc00.json\""));
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let out = run(&["build-graphs", "--manifest", "m.jsonl", "--mode", "bigram", "--out-dir", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_document_is_reported_and_others_written() {
    let dir = tempfile::tempdir().unwrap();
    let good = fs::read_to_string(fixtures().join("parsed/doc00.json")).unwrap();
    fs::write(dir.path().join("good.json"), good).unwrap();
    let bad = r#"{"doc_id":"bad","label":1,"tokens":[{"id":0,"text":"a","sentence":0},{"id":1,"text":"b","sentence":1}],
        "dependencies":[{"head":0,"dependent":1,"relation":"dep"}],"sentence_roots":[0,1]}"#;
    fs::write(dir.path().join("bad.json"), bad).unwrap();
    fs::write(
        dir.path().join("m.jsonl"),
        "{\"doc_id\":\"doc00\",\"split\":\"train\",\"path\":\"good.json\"}\n\
         {\"doc_id\":\"bad\",\"split\":\"train\",\"path\":\"bad.json\"}\n\
         {\"doc_id\":\"gone\",\"split\":\"test\",\"path\":\"missing.json\"}\n",
    )
    .unwrap();
    let out = run(&["build-graphs", "--manifest", s(&dir.path().join("m.jsonl")), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error: bad:") && stderr.contains("crosses sentences"), "{stderr}");
    assert!(stderr.contains("error: gone:"), "{stderr}");
    let summary = json(&out);
    assert_eq!(summary["written"], 1);
    assert_eq!(summary["failures"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("o/graphs/doc00.json").exists());
    assert!(!dir.path().join("o/graphs/bad.json").exists());
}

#[test]
fn tree_files_record_their_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let (graphs, trees) = staged(dir.path());
    for line in fs::read_to_string(&graphs).unwrap().lines().take(10) {
        let entry: Value = serde_json::from_str(line).unwrap();
        let g = read_graph(&graphs.parent().unwrap().join(entry["path"].as_str().unwrap())).unwrap();
        let file = TreeFile::read(&trees.join(format!("{}.json", g.doc_id()))).unwrap();
        let recomputed = structural_entropy(&g, &file.tree).unwrap().bits;
        assert!((recomputed - file.entropy_bits).abs() <= 1e-9);
        assert_eq!(file.tree.height(), 2);
    }
}

#[test]
fn random_trees_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (graphs, _) = staged(dir.path());
    let build = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = run(&[
            "build-trees", "--graphs", s(&graphs), "--height", "3", "--method", "random", "--seed", seed,
            "--out-dir", s(&out_dir), "--format", "tsv",
        ]);
        assert!(out.status.success());
        fs::read(out_dir.join("doc07.json")).unwrap()
    };
    assert_eq!(build("a", "5"), build("b", "5"));
    assert_ne!(build("a", "5"), build("c", "6"));
}

#[test]
fn height_outside_sweep_range_needs_override() {
    let dir = tempfile::tempdir().unwrap();
    let (graphs, _) = staged(dir.path());
    let t13 = dir.path().join("t13");
    let args = ["build-trees", "--graphs", s(&graphs), "--height", "13", "--out-dir", s(&t13)];
    let out = run(&args);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("outside 2..=12") && stderr.contains("--allow-any-height"), "{stderr}");
    let mut forced = args.to_vec();
    forced.push("--allow-any-height");
    let out = run(&forced);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["height"], 13);
}

#[test]
fn missing_stage_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let (graphs, _) = staged(dir.path());
    let out = run(&[
        "train", "--graphs", s(&graphs), "--trees", s(&dir.path().join("nope")), "--embeddings",
        s(&fixtures().join("embeddings.txt")), "--out-dir", s(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("build-trees: missing artifact"));

    let out = run(&[
        "build-trees", "--graphs", s(&dir.path().join("none.jsonl")), "--height", "2", "--out-dir", s(dir.path()),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("build-graphs: missing artifact"));
}

#[test]
fn train_eval_and_report_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (graphs, trees) = staged(dir.path());
    let emb = fixtures().join("embeddings.txt");
    let train = |out: &str| {
        let out = run(&[
            "train", "--graphs", s(&graphs), "--trees", s(&trees), "--embeddings", s(&emb), "--out-dir",
            s(&dir.path().join(out)), "--hidden", "16", "--position-slots", "32", "--max-epochs", "15", "--runs", "2",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        json(&out)
    };
    let mut a = train("r1");
    let mut b = train("r2");
    assert!(a["test_acc"]["std"].is_number());
    assert_eq!(a["runs"].as_array().unwrap().len(), 2);
    assert_eq!(a["train_documents"], 30);
    a["wall_clock_secs"] = Value::Null;
    b["wall_clock_secs"] = Value::Null;
    assert_eq!(a, b, "same seeds must give identical reports");
    assert_eq!(
        fs::read(dir.path().join("r1/run-1/checkpoint.json")).unwrap(),
        fs::read(dir.path().join("r2/run-1/checkpoint.json")).unwrap()
    );

    let ck = dir.path().join("r1/run-0/checkpoint.json");
    let out = run(&[
        "eval", "--checkpoint", s(&ck), "--graphs", s(&graphs), "--trees", s(&trees), "--embeddings", s(&emb),
        "--split", "test", "--format", "tsv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tsv = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = tsv.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[0], "test");
    assert_eq!(row[1], "10");
    let reported = a["runs"][0]["test"]["accuracy"].as_f64().unwrap();
    assert_eq!(row[2].parse::<f64>().unwrap(), reported);

    let out = run(&["report", "--checkpoint", s(&ck), "--leaves", "10,20,40"]);
    let report = json(&out);
    let flops: Vec<u64> = report["per_document"].as_array().unwrap().iter().map(|c| c["flops"].as_u64().unwrap()).collect();
    assert!(flops[0] < flops[1] && flops[1] < flops[2]);
}

#[test]
fn report_counts_small_model() {
    let dir = tempfile::tempdir().unwrap();
    let dims = ModelDims {
        input_dim: 4,
        hidden: 3,
        height: 2,
        classes: 2,
    };
    let model = TreeModel::new(dims, Pool::Mean, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let ck = dir.path().join("ck.json");
    fs::write(&ck, Checkpoint::from_model(&model, &TrainConfig::default(), 1, 0).to_json()).unwrap();
    let out = run(&["report", "--checkpoint", s(&ck)]);
    assert!(out.status.success());
    assert_eq!(json(&out)["params"], 73);

    fs::write(&ck, b"{\"dims\": [").unwrap();
    let out = run(&["report", "--checkpoint", s(&ck)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse error"));
}

#[test]
fn sweep_and_ablation_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (graphs, _) = staged(dir.path());
    let emb = fixtures().join("embeddings.txt");
    let common = ["--embeddings", s(&emb), "--hidden", "8", "--position-slots", "16", "--max-epochs", "3"];
    let sweep_dir = dir.path().join("sweep");
    let mut args = vec!["sweep", "--graphs", s(&graphs), "--heights", "2:4:2", "--out-dir", s(&sweep_dir), "--format", "tsv"];
    args.extend(common);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tsv = String::from_utf8(out.stdout).unwrap();
    let heights: Vec<&str> = tsv.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(heights, ["2", "4"]);
    assert!(sweep_dir.join("trees-h4/doc00.json").exists());

    let ab_dir = dir.path().join("ablate");
    let mut args = vec!["ablate-rt", "--graphs", s(&graphs), "--out-dir", s(&ab_dir), "--runs", "2"];
    args.extend(common);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["sema"]["feature_digest"], r["random"]["feature_digest"]);
    assert!(r["sema_mean_entropy"].as_f64().unwrap() < r["random_mean_entropy"].as_f64().unwrap());
    assert!(ab_dir.join("report.json").exists());
}
