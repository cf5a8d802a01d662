use std::path::Path;
use std::process::{Command, Output};

fn readerprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_readerprop"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.toml");
    let text = format!(
        "planted = true\nk = 3\nd1 = 16\nd2 = 8\nseq_len = 8\nself_heads = 2\nrole_heads = 2\nfusion_heads = 2\nepochs = 2\nview_epochs = 2\nlr = 1e-3\nout = {:?}\n{extra}",
        dir.join("from-file").display().to_string()
    );
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn help_exits_zero_and_usage_errors_exit_one() {
    assert_eq!(readerprop(&["--help"]).status.code(), Some(0));
    assert_eq!(readerprop(&["simulate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(readerprop(&[]).status.code(), Some(1));
    assert_eq!(readerprop(&["simulate", "--backend", "carrier-pigeon", "--config", "/nonexistent.toml"]).status.code(), Some(1));
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "learning_rate = 3\n");
    assert_eq!(readerprop(&["simulate", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn missing_ledger_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = readerprop(&["build-graph", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ledger"));
}

#[test]
fn unreachable_backend_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "chat_endpoint = \"http://127.0.0.1:9/v1/chat\"\nencoder_endpoint = \"http://127.0.0.1:9/v1/embed\"\nchat_model = \"m\"\nencoder_model = \"e\"\n",
    );
    let out = readerprop(&["simulate", "--config", &cfg, "--backend", "http"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn full_run_with_flags_overriding_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("flags");
    let out = out_dir.display().to_string();
    for stage in ["simulate", "build-graph", "train", "evaluate"] {
        let o = readerprop(&[stage, "--config", &cfg, "--out", &out, "--k", "2", "--seed", "5"]);
        assert_eq!(o.status.code(), Some(0), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(!dir.path().join("from-file").exists());
    let written = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(written.contains("k = 2") && written.contains("seed = 5"));
    let ledger = std::fs::read_to_string(out_dir.join("ledger.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 30 * 2);
    assert!(out_dir.join("eval.txt").exists());

    let report = readerprop(&["report", &out]);
    assert_eq!(report.status.code(), Some(0));
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("-- metrics.txt --") && text.contains("Macro-F1"));
}
