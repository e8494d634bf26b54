//! End-to-end runs of the `uhls` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uhls_core::synthbench::GoldenUhls;
use uhls_core::taxonomy::read_hierarchy;

fn uhls(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uhls")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// A small generated corpus with a fast run config.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&uhls(&["generate", "--out", "corpus", "--instances-per-label", "20", "--seed", "4"], dir.path()));
    let path = dir.path().join("corpus/run.toml");
    let mut cfg: toml::Table = std::fs::read_to_string(&path).unwrap().parse().unwrap();
    let enc = cfg["encoder"].as_table_mut().unwrap();
    enc.insert("token_buckets".into(), 4096.into());
    for k in ["left_dim", "right_dim", "char_dim"] {
        enc.insert(k.into(), 8.into());
    }
    cfg["training"].as_table_mut().unwrap().insert("epochs".into(), 4.into());
    std::fs::write(&path, toml::to_string(&cfg).unwrap()).unwrap();
    dir
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn show_config_prints_parseable_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&uhls(&["show-config"], dir.path()));
    for section in ["[data]", "[run]", "[encoder]", "[training]", "[evaluation]"] {
        assert!(text.contains(section), "{section} missing");
    }
    let t: toml::Table = text.parse().unwrap();
    assert_eq!(t["training"]["beta"].as_float(), Some(0.4));
    let over = ok(&uhls(&["show-config", "--model", "silo", "--seed", "9"], dir.path()));
    assert!(over.contains("model = \"silo\"") && over.contains("seed = 9"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = workspace();
    let d = dir.path();
    assert_eq!(code(&uhls(&["train"], d)), 2);
    assert_eq!(code(&uhls(&["evaluate", "--config", "corpus/missing.toml"], d)), 2);
    assert_eq!(code(&uhls(&["evaluate", "--config", "corpus/run.toml", "--scheme", "ideal"], d)), 2);
    std::fs::write(d.join("corpus/no_oracle.toml"), "[data]\nregistry = \"registry.toml\"\noracle = \"gone.txt\"\n").unwrap();
    let out = uhls(&["build-hierarchy", "--config", "corpus/no_oracle.toml"], d);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gone.txt"));
    let silo_direct = uhls(&["evaluate", "--config", "corpus/run.toml", "--model", "silo", "--criterion", "direct"], d);
    assert_eq!(code(&silo_direct), 2);
}

#[test]
fn inconsistent_oracle_prints_the_chain() {
    let dir = workspace();
    let d = dir.path().join("corpus");
    std::fs::write(d.join("oracle.txt"), "SUBSUMES fine:c0_0 news:c0\nSUBSUMES news:c0 med:c2\nDISJOINT fine:c0_0 med:c2\n").unwrap();
    let out = uhls(&["build-hierarchy", "--config", "run.toml"], &d);
    assert_ne!(code(&out), 0);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("inconsistent oracle") && err.contains("line 1") && err.contains("line 2"), "{err}");
}

#[test]
fn build_hierarchy_reproduces_the_golden_file_and_seeds_round_trip() {
    let dir = workspace();
    let d = dir.path().join("corpus");
    ok(&uhls(&["build-hierarchy", "--config", "run.toml"], &d));
    let built = read(d.join("run/hierarchy/hierarchy.txt"));
    let (h, m) = read_hierarchy(&built).unwrap();
    assert_eq!(GoldenUhls::from_built(&h, &m).to_text(), read(d.join("golden_uhls.txt")));
    assert!(read(d.join("run/hierarchy/build_log.txt")).contains("CASE2 news:misc"));
    std::fs::copy(d.join("run/hierarchy/hierarchy.txt"), d.join("seed.txt")).unwrap();
    ok(&uhls(&["build-hierarchy", "--config", "run.toml", "--seed-hierarchy", "seed.txt", "--out", "seeded"], &d));
    let (hs, _) = read_hierarchy(&read(d.join("seeded/hierarchy/hierarchy.txt"))).unwrap();
    assert_eq!(hs.edge_keys(), h.edge_keys());
}

#[test]
fn train_evaluate_predict_pipeline() {
    let dir = workspace();
    let d = dir.path().join("corpus");
    ok(&uhls(&["train", "--config", "run.toml"], &d));
    assert!(d.join("run/models/uhls/model.ckpt").is_file());
    let log = read(d.join("run/models/uhls/train_log.txt"));
    let best: Vec<f64> = log
        .lines()
        .filter_map(|l| l.split_whitespace().find_map(|f| f.strip_prefix("best_val=")))
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(!best.is_empty() && best.windows(2).all(|w| w[0] <= w[1]));

    ok(&uhls(&["train", "--config", "run.toml", "--model", "silo"], &d));
    let ckpts = std::fs::read_dir(d.join("run/models/silo")).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ckpt")
    });
    assert_eq!(ckpts.count(), 3);

    ok(&uhls(&["evaluate", "--config", "run.toml", "--scheme", "idealistic"], &d));
    let report: serde_json::Value = serde_json::from_str(&read(d.join("run/eval/uhls-idealistic/report.json"))).unwrap();
    let test_size = report["total"].as_u64().unwrap() as usize;
    ok(&uhls(&["evaluate", "--config", "run.toml", "--criterion", "direct"], &d));
    let ideal = read(d.join("run/eval/uhls-idealistic/predictions.jsonl"));
    let real = read(d.join("run/eval/uhls-realistic-direct/predictions.jsonl"));
    assert_eq!(ideal, real, "a single model predicts the same under both schemes");
    assert_eq!(real.lines().count(), test_size);
    let registry = uhls_core::ingestion::Registry::load(d.join("registry.toml")).unwrap();
    let expected: usize = registry.load_all(4).unwrap().iter().map(|s| s.splits.test.len()).sum();
    assert_eq!(test_size, expected);

    ok(&uhls(&["evaluate", "--config", "run.toml", "--model", "silo"], &d));
    let traces = read(d.join("run/eval/silo-realistic-hcl/traces.txt"));
    assert_eq!(traces.matches("# ").count(), test_size);

    let input = "{\"id\":\"s1\",\"tokens\":[\"the\",\"Kaba\",\"said\"],\"start\":1,\"end\":2}\n\n{\"tokens\":[\"x\"],\"start\":0,\"end\":1}\n";
    std::fs::write(d.join("in.jsonl"), input).unwrap();
    ok(&uhls(&["predict", "--config", "run.toml", "--input", "in.jsonl"], &d));
    let preds: Vec<serde_json::Value> =
        read(d.join("run/predict/uhls.jsonl")).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(preds.len(), 2);
    assert_eq!(preds[1]["id"], "line3");
    let label = preds[0]["label"].as_str().unwrap();
    let path: Vec<&str> = preds[0]["path"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(path.last(), Some(&label));
    assert_eq!(preds[0]["sentence"], format!("the [Kaba]{{{}}} said", path.join("/")));

    std::fs::write(d.join("empty.jsonl"), "").unwrap();
    ok(&uhls(&["predict", "--config", "run.toml", "--input", "empty.jsonl", "--output", "empty.out"], &d));
    assert_eq!(read(d.join("empty.out")), "");
    std::fs::write(d.join("bad.jsonl"), format!("{input}{{\"tokens\": [\"a\"], \"start\": 0\n")).unwrap();
    let bad = uhls(&["predict", "--config", "run.toml", "--input", "bad.jsonl", "--output", "bad.out"], &d);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bad.jsonl:4"));
}

/// Runs every command into `out` and returns its manifest.
fn full_run(d: &Path, out: &str) -> String {
    let c = ["--config", "run.toml", "--out", out];
    let with = |extra: &[&str]| -> Vec<String> { c.iter().chain(extra).map(|s| s.to_string()).collect() };
    let run = |cmd: &str, extra: &[&str]| {
        let mut args = vec![cmd.to_string()];
        args.extend(with(extra));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&uhls(&refs, d));
    };
    run("build-hierarchy", &[]);
    for model in ["uhls", "silo", "multihead"] {
        run("train", &["--model", model]);
        run("evaluate", &["--model", model, "--scheme", "idealistic"]);
        run("evaluate", &["--model", model, "--criterion", "rhcl"]);
        run("predict", &["--model", model, "--input", "data/med.jsonl"]);
    }
    read(d.join(out).join("manifest.json"))
}

#[test]
fn reruns_are_byte_identical() {
    let dir = workspace();
    let d = dir.path().join("corpus");
    let a = full_run(&d, "first");
    let b = full_run(&d, "second");
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert!(v["files"].as_object().unwrap().len() >= 20);
    let again = tempfile::tempdir().unwrap();
    ok(&uhls(&["generate", "--out", "corpus", "--instances-per-label", "20", "--seed", "4"], again.path()));
    assert_eq!(read(again.path().join("corpus/manifest.json")), {
        let first = tempfile::tempdir().unwrap();
        ok(&uhls(&["generate", "--out", "corpus", "--instances-per-label", "20", "--seed", "4"], first.path()));
        read(first.path().join("corpus/manifest.json"))
    });
}
