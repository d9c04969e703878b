use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cgpa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgpa")).args(args).output().expect("spawn cgpa")
}

fn ok(args: &[&str]) -> Value {
    let out = cgpa(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for o in [&a, &b] {
        ok(&["--out", s(o), "--seed", "5", "generate", "--n", "300"]);
    }
    for f in ["data.csv", "latent.csv", "graph.json", "graph.dot", "spec.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["seed"], 5);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 5);
}

#[test]
fn generate_without_seed_uses_spec_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let sum = ok(&["--out", s(&out), "generate", "--n", "50"]);
    assert_eq!(sum["seed"], 7);
    assert_eq!(json(&out.join("manifest.json"))["seed"], 7);
}

#[test]
fn pc_recovers_chain_skeleton() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("chain.json");
    fs::write(
        &spec,
        r#"{"nodes":["X","Y","Z"],"edges":[{"from":"X","to":"Y","weight":0.8},{"from":"Y","to":"Z","weight":0.8}],"seed":3}"#,
    )
    .unwrap();
    let g = dir.path().join("g");
    ok(&["--out", s(&g), "generate", "--spec", s(&spec), "--n", "2000"]);
    let d = dir.path().join("d");
    ok(&["--out", s(&d), "discover", "--data", s(&g.join("latent.csv")), "--algo", "pc", "--truth", s(&g.join("graph.json"))]);
    let graph = json(&d.join("graph.json"));
    assert_eq!(graph["kind"], "pdag");
    assert!(graph["directed"].as_array().unwrap().is_empty());
    let mut und: Vec<(String, String)> = graph["undirected"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["a"].as_str().unwrap().to_string(), e["b"].as_str().unwrap().to_string()))
        .collect();
    und.sort();
    assert_eq!(und, vec![("X".into(), "Y".into()), ("Y".into(), "Z".into())]);
    let m = json(&d.join("metrics.json"));
    assert_eq!(m["comparison"]["skeleton_f1"], 1.0);
    assert!(fs::read_to_string(d.join("graph.dot")).unwrap().contains("\"X\" -- \"Y\""));
}

#[test]
fn train_then_explain_is_efficient() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&["--out", s(&g), "--seed", "11", "generate", "--n", "400"]);
    let data = g.join("data.csv");
    let t = dir.path().join("t");
    ok(&["--out", s(&t), "train", "--data", s(&data), "--model", "ridge"]);
    let metrics = json(&t.join("metrics.json"));
    assert!(metrics["regression"]["mae"].as_f64().unwrap() > 0.0);

    let x = dir.path().join("x");
    ok(&["--out", s(&x), "explain", "--model", s(&t.join("model.json")), "--data", s(&data), "--row", "7", "--method", "all"]);
    let e = json(&x.join("explanation.json"));
    let attr = &e["attribution"];
    let sum: f64 = attr["contributions"].as_array().unwrap().iter().map(|c| c["phi"].as_f64().unwrap()).sum();
    let gap = attr["base_value"].as_f64().unwrap() + sum - attr["prediction"].as_f64().unwrap();
    assert!(gap.abs() <= 1e-10, "gap {gap}");
    assert_eq!(attr["contributions"].as_array().unwrap().len(), 22);
    assert!(e["lime"].is_object());
    assert_eq!(e["global_importance"].as_array().unwrap().len(), 2);
    assert!(e["recommendations"].as_array().unwrap().len() <= 3);
    let inputs = json(&x.join("manifest.json"))["inputs"].as_array().unwrap().len();
    assert_eq!(inputs, 2);
}

#[test]
fn evaluate_writes_report_and_models() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&["--out", s(&g), "--seed", "2", "generate", "--n", "300"]);
    let e = dir.path().join("e");
    ok(&["--out", s(&e), "evaluate", "--data", s(&g.join("data.csv")), "--models", "ols,ridge,tree:classification"]);
    let m = json(&e.join("metrics.json"));
    assert_eq!(m["regression"].as_array().unwrap().len(), 2);
    assert_eq!(m["classification"].as_array().unwrap().len(), 1);
    for f in ["ols", "ridge", "tree_cls"] {
        assert!(e.join("models").join(format!("{f}.json")).exists(), "{f}");
    }
    assert!(fs::read_to_string(e.join("report.txt")).unwrap().contains("ridge"));
}

#[test]
fn failure_is_one_json_line_and_cleans_up() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&["--out", s(&g), "generate", "--n", "100"]);
    // The run created the directory, so it must be gone again.
    let out = dir.path().join("i");
    let r = cgpa(&["--out", s(&out), "inspect", "--data", s(&g.join("data.csv")), "--crosstab", "HS:NOPE"]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8(r.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    let v: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["status"], "error");
    assert_eq!(v["command"], "inspect");
    assert!(!out.exists());

    // A pre-existing directory is kept, and its other files untouched.
    let keep = dir.path().join("keep");
    fs::create_dir(&keep).unwrap();
    fs::write(keep.join("other.txt"), "x").unwrap();
    let r = cgpa(&["--out", s(&keep), "train", "--data", s(&dir.path().join("missing.csv"))]);
    assert_eq!(r.status.code(), Some(1));
    let names: Vec<_> = fs::read_dir(&keep).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("other.txt")]);
}

#[test]
fn evaluate_graph_rejects_pdag() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&["--out", s(&g), "generate", "--n", "200"]);
    let d = dir.path().join("d");
    ok(&["--out", s(&d), "discover", "--data", s(&g.join("latent.csv")), "--algo", "pc"]);
    let r = cgpa(&[
        "--out",
        s(&dir.path().join("eg")),
        "evaluate-graph",
        "--graph",
        s(&d.join("graph.json")),
        "--data",
        s(&g.join("latent.csv")),
    ]);
    assert_eq!(r.status.code(), Some(1));

    let eg = dir.path().join("eg2");
    ok(&["--out", s(&eg), "evaluate-graph", "--graph", s(&g.join("graph.json")), "--data", s(&g.join("latent.csv")), "--permutations", "100"]);
    let m = json(&eg.join("metrics.json"));
    assert!(m["markov_violation_fraction"].as_f64().unwrap() < 0.2);
}

#[test]
fn inspect_reports_every_factor() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g");
    ok(&["--out", s(&g), "generate", "--n", "150"]);
    let i = dir.path().join("i");
    ok(&["--out", s(&i), "inspect", "--data", s(&g.join("data.csv"))]);
    let m = json(&i.join("metrics.json"));
    assert_eq!(m["n_rows"], 150);
    assert_eq!(m["factors"].as_array().unwrap().len(), 23);
    assert_eq!(m["crosstabs"].as_array().unwrap().len(), 2);
    let c = m["correlation"]["values"].as_array().unwrap();
    assert_eq!(c.len(), 23);
    assert!((c[0][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
}
