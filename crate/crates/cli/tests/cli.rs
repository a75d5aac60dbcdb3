use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use atp_core::synthetic::{synthetic_cqa, CqaConfig};
use serde_json::Value;

const F1: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/f1.txt");

fn atp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atp"))
        .args(args)
        .env_remove("ATP_THREADS")
        .output()
        .expect("atp runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn f1_embed(dir: &Path, name: &str, seed: &str) -> (PathBuf, Output) {
    let model = dir.join(name);
    let out = atp(&[
        "embed", "--graph", F1, "--out", p(&model), "--variant", "log", "--k", "4", "--lambda", "0.1",
        "--zero-weight", "0.05", "--sweeps", "200", "--seed", seed, "--no-timings",
    ]);
    (model, out)
}

#[test]
fn embed_writes_model_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let (model, out) = f1_embed(dir.path(), "f1.atpm", "3");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.exists());
    let rep = read_json(&dir.path().join("f1.report.json"));
    assert_eq!(rep["removed_edges"], 4);
    assert_eq!(rep["nnz_A"], 9);
    assert_eq!(rep["seed"], 3);
    assert_eq!(rep["config_echo"]["k"], "4");
    assert_eq!(rep["tool_version"], env!("CARGO_PKG_VERSION"));
    let stages: Vec<&str> = rep["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(
        stages,
        ["break_cycles", "assign_levels", "transitive_closure", "build_L", "build_M", "factorize"]
    );
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = f1_embed(dir.path(), "a.atpm", "9");
    let (b, _) = f1_embed(dir.path(), "b.atpm", "9");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    let ra = std::fs::read_to_string(dir.path().join("a.report.json")).unwrap();
    let rb = std::fs::read_to_string(dir.path().join("b.report.json")).unwrap();
    assert_eq!(ra.replace("a.atpm", "b.atpm"), rb);
}

#[test]
fn embedding_export_and_f32() {
    let dir = tempfile::tempdir().unwrap();
    let (s, t) = (dir.path().join("s.tsv"), dir.path().join("t.tsv"));
    let out = atp(&[
        "embed", "--graph", F1, "--out", p(&dir.path().join("m.atpm")), "--k", "3", "--precision", "f32",
        "--sources", p(&s), "--targets", p(&t),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(&s).unwrap();
    assert_eq!(rows.lines().count(), 5);
    assert!(rows.lines().all(|l| l.split('\t').count() == 4));
    assert!(t.exists());
}

#[test]
fn acyclic_graph_passes_through() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("dag.txt");
    std::fs::write(&g, "a b\nb c\na c\n").unwrap();
    let out = atp(&["embed", "--graph", p(&g), "--out", p(&dir.path().join("m.atpm")), "--k", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read_json(&dir.path().join("m.report.json"))["removed_edges"], 0);
}

#[test]
fn unreadable_graph_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = atp(&["embed", "--graph", p(&dir.path().join("missing.txt")), "--out", p(&dir.path().join("m.atpm"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.txt"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn failing_stage_is_named_and_cleaned_up() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("lonely.txt");
    std::fs::write(&g, "# no edges at all\n").unwrap();
    let out = atp(&["embed", "--graph", p(&g), "--out", p(&dir.path().join("m.atpm"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("factorize"));
    assert!(!dir.path().join("m.atpm").exists());
    assert!(!dir.path().join("m.report.json").exists());
}

#[test]
fn break_cycles_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let removed = dir.path().join("removed.tsv");
    let levels = dir.path().join("levels.tsv");
    let kept = dir.path().join("kept.tsv");
    let out = atp(&[
        "break-cycles", "--graph", F1, "--out", p(&removed), "--levels", p(&levels), "--kept", p(&kept),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&removed).unwrap(), "C\tB\nD\tB\nE\tC\nE\tD\n");
    assert_eq!(std::fs::read_to_string(&levels).unwrap(), "A\t1\nB\t2\nC\t3\nD\t3\nE\t4\n");
    assert_eq!(std::fs::read_to_string(&kept).unwrap().lines().count(), 6);
    let s = read_json(&dir.path().join("removed.summary.json"));
    assert_eq!((s["removed_count"].as_u64(), s["scc_count"].as_u64(), s["max_scc_size"].as_u64()), (Some(4), Some(2), Some(4)));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("atp.conf");
    std::fs::write(&conf, "# test\nk = 3\nsweeps = 9\nvariant = harmonic\n").unwrap();
    let model = dir.path().join("m.atpm");
    let out = atp(&["embed", "--graph", F1, "--out", p(&model), "--config", p(&conf), "--k", "2", "-v"]);
    assert_eq!(out.status.code(), Some(0));
    let echo = &read_json(&dir.path().join("m.report.json"))["config_echo"];
    assert_eq!((echo["k"].as_str(), echo["sweeps"].as_str(), echo["variant"].as_str()), (Some("2"), Some("9"), Some("harmonic")));
    assert!(String::from_utf8_lossy(&out.stderr).contains("overrides `k = 3`"));

    std::fs::write(&conf, "bogus = 1\n").unwrap();
    let out = atp(&["embed", "--graph", F1, "--out", p(&model), "--config", p(&conf)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn usage_errors() {
    for sub in [&["embed"][..], &["break-cycles"], &["eval-lp"], &["cqa", "ingest"], &["cqa", "eval-qde"], &["cqa", "route"]] {
        let mut args = sub.to_vec();
        args.push("--help");
        let out = atp(&args);
        assert_eq!(out.status.code(), Some(0), "{sub:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
    let dir = tempfile::tempdir().unwrap();
    let out = atp(&["eval-lp", "--graph", F1, "--ratio", "1.5", "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--ratio"));
    let out = atp(&["embed", "--graph", F1, "--out", "x", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = atp(&["cqa", "route", "--records", "r", "--cold", "c", "--out", "o", "--model", "m", "--save-model", "s"]);
    assert_eq!(out.status.code(), Some(2));
    let out = atp(&["embed", "--graph", F1, "--out", p(&dir.path().join("m.atpm")), "--k", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_lp_report() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("planted.txt");
    let planted = atp_core::synthetic::planted_hierarchy(&atp_core::synthetic::PlantedConfig {
        nodes: 200,
        edges: 1000,
        levels: 10,
        ..Default::default()
    });
    atp_core::graph::write_edge_list(&planted.graph, planted.graph.edges(), &g).unwrap();
    let report = dir.path().join("lp.json");
    let out = atp(&[
        "eval-lp", "--graph", p(&g), "--ratio", "0.1", "--variants", "log,constant", "--k", "8", "--sweeps", "20",
        "--seed", "7", "--out", p(&report), "--threads", "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&report);
    assert_eq!(r["dataset"], "planted");
    assert_eq!(r["seed"], 7);
    assert_eq!(r["ratio"], 0.1);
    assert_eq!(r["splits"]["n_pos"], 100);
    assert_eq!(r["splits"]["n_neg"], 100);
    let results = r["results"].as_array().unwrap();
    let names: Vec<&str> = results.iter().map(|x| x["variant"].as_str().unwrap()).collect();
    assert_eq!(names, ["constant", "log"]);
    for x in results {
        let auc = x["auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        assert!(x["train_seconds"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn eval_lp_shortfall_exits_1() {
    // a chain cannot lose any edge without disconnecting
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("chain.txt");
    std::fs::write(&g, "a b\nb c\nc d\nd e\n").unwrap();
    let out = atp(&["eval-lp", "--graph", p(&g), "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(2), "no positives means no evaluation");

    let g = dir.path().join("ring.txt");
    std::fs::write(&g, "a b\nb c\nc d\na c\nb d\nd e\ne f\n").unwrap();
    let out = atp(&["eval-lp", "--graph", p(&g), "--ratio", "0.5", "--k", "2", "--out", p(&dir.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("r.json"));
    assert!(r["splits"]["shortfall"].as_u64().unwrap() > 0);
}

fn write_dump(dir: &Path) -> (PathBuf, PathBuf) {
    let (posts, votes) = synthetic_cqa(&CqaConfig::default());
    let (pp, vp) = (dir.join("Posts.xml"), dir.join("Votes.xml"));
    std::fs::write(&pp, posts).unwrap();
    std::fs::write(&vp, votes).unwrap();
    (pp, vp)
}

#[test]
fn cqa_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (posts, votes) = write_dump(d);
    let (train, cold, ingest) = (d.join("train.tsv"), d.join("cold.tsv"), d.join("ingest.json"));
    let out = atp(&[
        "cqa", "ingest", "--posts", p(&posts), "--votes", p(&votes), "--out", p(&train), "--cold", p(&cold),
        "--report", p(&ingest),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = read_json(&ingest);
    assert_eq!(rep["questions"], 30);
    assert_eq!(rep["records"], 24);
    assert_eq!(rep["cold"], 6);

    let model = d.join("cqa.atpm");
    let qde = d.join("qde.json");
    let out = atp(&[
        "cqa", "eval-qde", "--records", p(&train), "--out", p(&qde), "--save-model", p(&model), "--k", "8",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let q = read_json(&qde);
    assert_eq!(q["questions"], 24);
    assert!((0.0..=1.0).contains(&q["accuracy"].as_f64().unwrap()));

    let routed = d.join("route.json");
    let out = atp(&[
        "cqa", "route", "--records", p(&train), "--cold", p(&cold), "--model", p(&model), "--window", "5",
        "--out", p(&routed),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&routed);
    assert_eq!(r["metrics"]["questions"], 6);
    assert_eq!(r["routed"].as_array().unwrap().len(), 6);
    assert_eq!(r["config_echo"]["window"], "5");
    eprintln!("routing metrics {}", r["metrics"]);
}
