use std::fs;
use std::path::Path;

use rafen_core::pipeline::{embedding_path, Pipeline, RunConfig, Stage};
use rafen_core::synthetic::{CommunityGraph, CommunityGraphConfig};
use rafen_core::Error;

fn write_toy_graph(dir: &Path) {
    let g = CommunityGraph::generate(&CommunityGraphConfig {
        nodes: 60,
        p_in: 0.25,
        p_out: 0.02,
        churn: 0.05,
        persistence: 0.6,
        snapshots: 3,
        seed: 11,
    });
    let mut buf = Vec::new();
    g.write_edgelist(&mut buf, 100).unwrap();
    fs::write(dir.join("toy.txt"), buf).unwrap();
}

fn config(dir: &Path, methods: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "dataset": {"path": dir.join("toy.txt"), "name": "toy"},
        "snapshots": {"frequency": {"fixed_span": 100}},
        "train": {"dim": 8, "walk_length": 10, "walks_per_node": 2, "window": 3, "epochs": 1},
        "methods": methods,
        "aggregations": [{"method": "last"}, {"method": "mean"}],
        "retrains": 2,
        "seed": 3,
        "output_dir": dir.join("out"),
        "cache_dir": dir.join("cache"),
    })
}

fn parse(v: serde_json::Value) -> RunConfig {
    serde_json::from_value(v).unwrap()
}

#[test]
fn second_run_is_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_graph(dir.path());
    let cfg = parse(config(dir.path(), serde_json::json!(["vanilla", "rafen_all", "posthoc_pa"])));
    let first = Pipeline::new(cfg.clone()).unwrap().run(Stage::StudyPrevnext).unwrap();
    let embed = first.stage(Stage::Embed).unwrap();
    // snapshot 0 is plain Node2Vec for every method, so rafen_all may reuse vanilla's
    assert_eq!(embed.trained + embed.cache_hits, 2 * 2 * 3);
    assert!(embed.trained >= 2 * 2 * 3 - 2);

    let second = Pipeline::new(cfg).unwrap().run(Stage::StudyPrevnext).unwrap();
    let embed = second.stage(Stage::Embed).unwrap();
    assert_eq!(embed.trained, 0);
    assert_eq!(embed.cache_hits, 2 * 2 * 3);
    assert_eq!(first.files, second.files);
}

#[test]
fn manifest_lists_every_output() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_graph(dir.path());
    let cfg = parse(config(dir.path(), serde_json::json!(["vanilla", "posthoc_pa", "rafen_all"])));
    let out = cfg.output_dir.clone();
    let manifest = Pipeline::new(cfg).unwrap().run(Stage::StudyPrevnext).unwrap();
    for t in 0..3 {
        for label in ["vanilla", "posthoc_pa", "rafen_all"] {
            assert!(embedding_path(&out, label, 1, t).is_file());
        }
    }
    for f in [
        "ingest/summary.json",
        "snapshots/summary.json",
        "eval/dataset.json",
        "report/report.json",
        "report/table.csv",
        "report/ranks.csv",
        "study/prevnext.csv",
        "posthoc/posthoc_pa/run0/map1.csv",
        "aggregated/rafen_all/last/run1.bin",
    ] {
        assert!(manifest.files.iter().any(|e| e.path == f), "{f} missing");
    }
    let mut on_disk = 0;
    let mut stack = vec![out.clone()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                on_disk += 1;
            }
        }
    }
    assert_eq!(on_disk, manifest.files.len());
    for name in ["ingest", "snapshot", "embed", "align-posthoc", "aggregate", "evaluate", "study-prevnext"] {
        assert!(manifest.stages.iter().any(|s| s.stage == name), "{name}");
    }
}

#[test]
fn alpha_sweep_and_prevnext_rows() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_graph(dir.path());
    let mut v = config(dir.path(), serde_json::json!(["vanilla", "rafen_all"]));
    v["alpha"] = serde_json::json!([0.2, 0.5, 0.8]);
    let mut p = Pipeline::new(parse(v)).unwrap();
    p.run(Stage::StudyPrevnext).unwrap();
    let labels: Vec<&String> = p.embeddings().keys().collect();
    assert_eq!(labels, ["rafen_all_a0.2", "rafen_all_a0.5", "rafen_all_a0.8", "vanilla"]);

    let summary = p.summary().unwrap();
    assert_eq!(summary.reports.len(), 4 * 2);
    let rows = p.study().unwrap();
    // (T - 1) snapshots x methods x {prev, next}
    assert_eq!(rows.len(), 2 * 4 * 2);
    for r in rows.iter().filter(|r| r.method == "vanilla") {
        assert!((r.ratio - 1.0).abs() < 1e-12);
    }
    let csv = fs::read_to_string(p.output_dir().join("study/prevnext.csv")).unwrap();
    assert!(csv.starts_with("snapshot,method,scenario,ratio"));
    assert_eq!(csv.lines().count(), 1 + rows.len());
}

#[test]
fn study_reads_embeddings_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_graph(dir.path());
    let cfg = parse(config(dir.path(), serde_json::json!(["vanilla", "rafen_all"])));

    let err = Pipeline::new(cfg.clone()).unwrap().study_from_disk().unwrap_err();
    assert!(matches!(&err, Error::Stage { stage, .. } if *stage == "study-prevnext"), "{err}");
    assert!(err.to_string().contains("embed"));

    let mut full = Pipeline::new(cfg.clone()).unwrap();
    full.run(Stage::Embed).unwrap();
    let mut study = Pipeline::new(cfg).unwrap();
    study.study_from_disk().unwrap();
    assert_eq!(study.study().unwrap().len(), 2 * 2 * 2);
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_graph(dir.path());
    let v = config(dir.path(), serde_json::json!(["vanilla", "rafen_ref_ej"]));
    assert!(matches!(Pipeline::new(parse(v)), Err(Error::Config(_))));
    let mut v = config(dir.path(), serde_json::json!(["vanilla"]));
    v["retrains"] = serde_json::json!(0);
    assert!(Pipeline::new(parse(v)).is_err());
    assert!(!dir.path().join("out").exists());
}
