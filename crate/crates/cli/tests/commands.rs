mod common;

use std::fs;
use std::path::Path;

use needle_cli::commands;
use needle_cli::{ExperimentConfig, Overrides};

fn setup(extra: &str) -> (tempfile::TempDir, ExperimentConfig) {
    let dir = tempfile::tempdir().unwrap();
    common::write_corpus(dir.path(), 800, 0.1, 3);
    let cfg_path = common::write_config(dir.path(), extra);
    let mut cfg = ExperimentConfig::load(&cfg_path).unwrap();
    cfg.apply(&Overrides {
        out: Some(dir.path().join("results")),
        ..Default::default()
    });
    (dir, cfg)
}

/// Data rows of a results CSV, after the provenance line and the header.
fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("# needle "), "{first}");
    assert!(first.contains("config_sha256=") && first.contains("seed=42"), "{first}");
    let body: String = lines.map(|l| format!("{l}\n")).collect();
    csv::Reader::from_reader(body.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn keywords_emits_one_hundred_lists_and_reruns_identically() {
    let (_dir, cfg) = setup("");
    let out = commands::cmd_keywords(&cfg).unwrap();
    let scores = data_rows(&out.join("keyword_scores.csv"));
    assert_eq!(scores.len(), 100);
    assert!(scores.iter().all(|r| r[1] == "10"));
    let lists = data_rows(&out.join("keyword_lists.csv"));
    assert_eq!(lists.len(), 1000);
    let summary = data_rows(&out.join("keyword_summary.csv"));
    let (min, mean, max): (f64, f64, f64) = (summary[0][1].parse().unwrap(), summary[0][2].parse().unwrap(), summary[0][3].parse().unwrap());
    assert!(min <= mean && mean <= max && max > 0.0);

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"], cfg.sha256());
    assert_eq!(manifest["seeds"]["seed"], 42);

    let first = snapshot(&out);
    commands::cmd_keywords(&cfg).unwrap();
    assert_eq!(first, snapshot(&out));
}

#[test]
fn expand_rows_per_space_and_superset_recall() {
    let (_dir, cfg) = setup("");
    let out = commands::cmd_expand(&cfg).unwrap();
    let rows = data_rows(&out.join("expansion_trajectories.csv"));
    assert_eq!(rows.len(), 100 * 10);
    for list in rows.chunks(10) {
        let recalls: Vec<f64> = list.iter().map(|r| r[9].parse().unwrap()).collect();
        let sizes: Vec<usize> = list.iter().map(|r| r[3].parse().unwrap()).collect();
        assert!(recalls.windows(2).all(|w| w[0] <= w[1]), "{recalls:?}");
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    }
    let nn = data_rows(&out.join("neighbors.csv"));
    assert_eq!(nn.len(), 9);
    assert!(nn.iter().all(|r| r[1] == "baban"));
}

#[test]
fn expand_requires_an_existing_embedding_file() {
    let (_dir, cfg) = setup("");
    let mut cfg = cfg;
    cfg.expand.embedding_file = Some("/nonexistent/vectors.txt".into());
    let err = commands::cmd_expand(&cfg).unwrap_err();
    assert!(err.to_string().contains("does not exist"), "{err}");
}

#[test]
fn global_space_from_a_vector_file() {
    let (dir, mut cfg) = setup("");
    let vectors: String = common::words()
        .iter()
        .enumerate()
        .map(|(i, w)| format!("{w} {} {} {}\n", (i % 7) as f64 + 0.5, (i % 3) as f64 - 1.0, 1.0))
        .collect();
    let path = dir.path().join("vectors.txt");
    fs::write(&path, vectors).unwrap();
    cfg.expand.embedding_file = Some(path);
    cfg.expand.local = false;
    let out = commands::cmd_expand(&cfg).unwrap();
    let rows = data_rows(&out.join("expansion_trajectories.csv"));
    assert_eq!(rows.len(), 1000);
    assert!(rows.iter().all(|r| r[0] == "global"));
}

#[test]
fn topicrules_sweep_counts_match_the_subset_arithmetic() {
    let (_dir, cfg) = setup("");
    let out = commands::cmd_topicrules(&cfg).unwrap();
    let sweep = data_rows(&out.join("sweep.csv"));
    // K=5: 5+10+10 subsets, K=15: 15+105+455; four thresholds each
    assert_eq!(sweep.len(), (25 + 575) * 4);
    let best = data_rows(&out.join("best_rules.csv"));
    assert_eq!(best.len(), 4);
    assert!(fs::read_to_string(out.join("top_terms.csv")).unwrap().lines().count() > 2);
    assert!(out.join("fits/lda_k5.bin").exists());
}

#[test]
fn supervised_writes_traces_and_curves() {
    let (_dir, cfg) = setup("");
    let out = commands::cmd_supervised(&cfg).unwrap();
    for tag in ["active_svm", "passive_svm"] {
        let curve = data_rows(&out.join(format!("curve_{tag}.csv")));
        assert_eq!(curve.len(), 4);
        for fold in 0..5 {
            let nd = fs::read_to_string(out.join(format!("traces/{tag}_fold{fold}.ndjson"))).unwrap();
            let records: Vec<needle_core::TraceRecord> = nd.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
            assert_eq!(records.len(), 4);
            assert_eq!(records.last().unwrap().labeled_count, 120);
        }
    }
    let plan: needle_core::FoldPlan = serde_json::from_str(&fs::read_to_string(out.join("fold_plan.json")).unwrap()).unwrap();
    assert_eq!(plan.n_folds, 5);
}

#[test]
fn seed_override_changes_results_and_hash() {
    let (_dir, mut cfg) = setup("");
    let a = cfg.sha256();
    cfg.apply(&Overrides {
        seed: Some(43),
        ..Default::default()
    });
    assert_ne!(a, cfg.sha256());
    let out = commands::cmd_keywords(&cfg).unwrap();
    let head = fs::read_to_string(out.join("keyword_scores.csv")).unwrap();
    assert!(head.lines().next().unwrap().contains("seed=43"));
}
