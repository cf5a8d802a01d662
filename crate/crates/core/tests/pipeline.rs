use std::path::Path;

use readerprop::agents::{BehaviorRow, FeedbackLedger, SimulatedFeedback};
use readerprop::pipeline::{self, orphans, planted_corpus, read_manifest, PipelineConfig, PipelineError, PlantedLayout};

fn small(out: &Path) -> PipelineConfig {
    PipelineConfig {
        planted: true,
        k: 3,
        d1: 16,
        d2: 8,
        seq_len: 8,
        self_heads: 2,
        role_heads: 2,
        fusion_heads: 2,
        lr: 1e-3,
        epochs: 2,
        view_epochs: 2,
        out: out.to_path_buf(),
        ..PipelineConfig::default()
    }
}

fn run_all(cfg: &PipelineConfig) {
    pipeline::cmd_simulate(cfg).unwrap();
    pipeline::cmd_build_graph(cfg).unwrap();
    pipeline::cmd_train(cfg).unwrap();
}

#[test]
fn every_artifact_has_a_manifest_with_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    run_all(&cfg);
    pipeline::cmd_evaluate(&cfg).unwrap();
    assert_eq!(orphans(dir.path()).unwrap(), Vec::<std::path::PathBuf>::new());
    for name in ["ledger.jsonl", "graph.rpmx", "model.rpmx", "metrics.txt", "eval.json"] {
        let m = read_manifest(&dir.path().join(name)).expect(name);
        assert_eq!(m.config_hash, cfg.hash());
        assert_eq!(m.seed, cfg.seed);
    }
    let model = read_manifest(&dir.path().join("model.rpmx")).unwrap();
    assert!(model.inputs.iter().any(|i| i.path.ends_with("graph.rpmx")));
}

#[test]
fn freezing_upstream_shrinks_the_trainable_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("a"));
    run_all(&cfg);
    let frozen = PipelineConfig {
        freeze_upstream: true,
        out: dir.path().join("b"),
        ..cfg.clone()
    };
    run_all(&frozen);
    let count = |p: &Path| read_manifest(&p.join("model.rpmx")).unwrap().notes["trainable_params"].as_u64().unwrap();
    assert!(count(&frozen.out) < count(&cfg.out));
    assert!(count(&frozen.out) > 0);
}

#[test]
fn missing_follows_leave_the_follow_view_as_pass_through() {
    let dir = tempfile::tempdir().unwrap();
    let mut corpus = planted_corpus(&PlantedLayout {
        users: 14,
        per_class: 6,
        ..Default::default()
    });
    corpus.follows.clear();
    corpus.save(&dir.path().join("data")).unwrap();
    let cfg = PipelineConfig {
        planted: false,
        posts: Some(dir.path().join("data/posts.jsonl")),
        users: Some(dir.path().join("data/users.jsonl")),
        ..small(&dir.path().join("run"))
    };
    pipeline::cmd_simulate(&cfg).unwrap();
    let summary = pipeline::cmd_build_graph(&cfg).unwrap();
    assert_eq!(summary.edges[0], 0);
    assert!(!summary.view_trained[0]);
    let m = read_manifest(&cfg.out.join("graph.rpmx")).unwrap();
    assert_eq!(m.notes["view_follow"], "pass-through");
}

#[test]
fn totals_scale_with_k() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        k: 25,
        sweep_k: vec![50, 100],
        ..small(dir.path())
    };
    let s = pipeline::cmd_simulate(&cfg).unwrap();
    let totals: Vec<(usize, usize)> = s.rows.iter().map(|r| (r.top_k, r.total)).collect();
    assert_eq!(totals, vec![(25, 30 * 25), (50, 30 * 50), (100, 30 * 100)]);
}

#[test]
fn table_total_at_full_scale_is_users_times_k() {
    let mut ledger = FeedbackLedger::new();
    for r in 0..3508 {
        for p in 0..100 {
            ledger.insert(SimulatedFeedback::from_raw(&format!("r{r}"), &format!("p{p}"), "Behavior: repost".into()), false).unwrap();
        }
    }
    let row = BehaviorRow::from_ledger(&ledger, 100, "mock");
    assert_eq!(row.total, 350800);
}

#[test]
fn resumed_simulation_matches_a_single_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    pipeline::cmd_simulate(&cfg).unwrap();
    let full = std::fs::read_to_string(dir.path().join("ledger.jsonl")).unwrap();
    let head: String = full.lines().take(20).map(|l| format!("{l}\n")).collect();
    std::fs::write(dir.path().join("ledger.jsonl"), head).unwrap();
    let resumed = PipelineConfig { resume: true, ..cfg };
    pipeline::cmd_simulate(&resumed).unwrap();
    assert_eq!(std::fs::read_to_string(dir.path().join("ledger.jsonl")).unwrap(), full);
}

#[test]
fn cache_does_not_change_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let plain = small(&dir.path().join("plain"));
    let cached = PipelineConfig {
        cache_dir: Some(dir.path().join("cache")),
        out: dir.path().join("cached"),
        ..plain.clone()
    };
    run_all(&plain);
    run_all(&cached);
    // a second cached run reads every response back from disk
    let again = PipelineConfig {
        out: dir.path().join("again"),
        ..cached.clone()
    };
    run_all(&again);
    for out in [&cached.out, &again.out] {
        assert_eq!(std::fs::read(plain.out.join("metrics.json")).unwrap(), std::fs::read(out.join("metrics.json")).unwrap());
    }
}

#[test]
fn build_graph_without_a_ledger_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = pipeline::cmd_build_graph(&small(dir.path())).unwrap_err();
    assert!(matches!(err, PipelineError::Data(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn report_covers_zero_one_and_two_runs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pipeline::cmd_report(dir.path()).unwrap(), "");

    let one = small(&dir.path().join("one"));
    run_all(&one);
    let single = pipeline::cmd_report(&one.out).unwrap();
    assert_eq!(single.matches("== run").count(), 1);
    assert!(single.contains("-- metrics.txt --"));
    assert!(!single.contains("== comparison =="));

    let two = PipelineConfig {
        seed: 7,
        ..small(&dir.path().join("two"))
    };
    run_all(&two);
    let both = pipeline::cmd_report(dir.path()).unwrap();
    assert_eq!(both.matches("== run").count(), 2);
    let table: Vec<&str> = both.split("== comparison ==").nth(1).unwrap().trim().lines().collect();
    assert_eq!(table.len(), 3);
    assert!(table[1].starts_with("one |") && table[2].starts_with("two |"));
}
