use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use thrifty_core::env::EnvConfig;
use thrifty_core::fleet::FleetMetrics;
use thrifty_core::persist::load_dataset;

const BIN: &str = env!("CARGO_BIN_EXE_thrifty");

/// Small networks and a short budget so each training call takes a few seconds.
const FAST_CONFIG: &str = r#"{
  "num_demos": 5,
  "interactive_steps": 300,
  "initial_rollouts": 3,
  "critic_refresh_rollouts": 3,
  "critic_refresh_every": 150,
  "ensemble": {"fit_steps": 300, "retrain_steps": 20},
  "critic": {"init_steps": 300, "update_steps": 100}
}"#;

fn thrifty(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fast.json"), FAST_CONFIG).unwrap();
    dir
}

fn train(dir: &Path, out_dir: &str, extra: &[&str]) -> String {
    let mut args = vec!["--config", "fast.json", "train", "--out-dir", out_dir];
    args.extend_from_slice(extra);
    ok(&thrifty(dir, &args))
}

#[test]
fn training_twice_gives_identical_metrics() {
    let dir = workspace();
    train(dir.path(), "a", &["--algorithm", "thrifty", "--seed", "7"]);
    train(dir.path(), "b", &["--algorithm", "thrifty", "--seed", "7"]);
    for f in [
        "metrics.jsonl",
        "summary.json",
        "policy.json",
        "critic.json",
    ] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty());
        assert!(a == b, "{f} differs between identical runs");
    }
}

#[test]
fn ablation_on_a_baseline_is_a_usage_error() {
    let dir = workspace();
    let out = thrifty(
        dir.path(),
        &["train", "--algorithm", "bc", "--ablate", "risk"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ablations only apply to thrifty"), "{err}");
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn invalid_flags_exit_with_usage() {
    let dir = workspace();
    for args in [
        vec!["train", "--algorithm", "dagger"],
        vec!["train", "--bogus"],
        vec!["eval", "--autonomous", "--with-interventions"],
        vec!["train", "--alpha", "1.5"],
    ] {
        let out = thrifty(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(
            String::from_utf8_lossy(&out.stderr).contains("Usage"),
            "{args:?}"
        );
    }
}

#[test]
fn missing_config_file_is_reported() {
    let dir = workspace();
    let out = thrifty(dir.path(), &["--config", "nope.json", "train"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
}

#[test]
fn eval_export_and_fleet_read_a_run_directory() {
    let dir = workspace();
    let summary = train(
        dir.path(),
        "run",
        &["--algorithm", "thrifty", "--seed", "1"],
    );
    assert!(summary.contains("T Ints"), "{summary}");

    for (flag, label) in [
        ("--autonomous", "Auto Succ"),
        ("--with-interventions", "Int-Aided Succ"),
    ] {
        let out = ok(&thrifty(
            dir.path(),
            &["eval", "--run-dir", "run", flag, "--episodes", "20"],
        ));
        let line = out.trim();
        let (name, frac) = line.split_once(": ").expect("label: k/N");
        assert_eq!(name, label);
        let (k, n) = frac.split_once('/').unwrap();
        assert_eq!(n, "20");
        assert!(k.parse::<usize>().unwrap() <= 20);
    }

    let csv = ok(&thrifty(
        dir.path(),
        &["export", "--format", "csv", "--eval-episodes", "5", "run"],
    ));
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    for col in [
        "algorithm",
        "T Ints",
        "T Acts (H)",
        "Auto Succ",
        "Int-Aided Succ",
    ] {
        assert!(header.contains(col), "{header}");
    }
    let row = lines.next().unwrap();
    assert!(row.starts_with("thrifty,1,"), "{row}");
    assert!(row.contains("/5"), "{row}");

    let jsonl = ok(&thrifty(
        dir.path(),
        &["export", "--format", "jsonl", "run"],
    ));
    let v: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(v["algorithm"], "thrifty");
    assert!(v["T Ints"].is_u64());

    let out = ok(&thrifty(
        dir.path(),
        &[
            "fleet",
            "--run-dir",
            "run",
            "--robots",
            "3",
            "--steps",
            "40",
            "--trace",
            "trace.jsonl",
        ],
    ));
    let metrics: FleetMetrics = serde_json::from_str(&out).unwrap();
    assert_eq!(metrics.ticks, 40);
    assert_eq!(metrics.idle.len(), 3);
    assert_eq!(
        metrics.total_acts_h + metrics.total_acts_r + metrics.idle.iter().sum::<usize>(),
        120
    );
    let trace = fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 40);
}

#[test]
fn demo_collect_writes_loadable_dataset() {
    let dir = workspace();
    let out = ok(&thrifty(
        dir.path(),
        &[
            "demo-collect",
            "--num-demos",
            "4",
            "--seed",
            "2",
            "--out",
            "demos.jsonl",
        ],
    ));
    assert!(out.contains("demos.jsonl"));
    let data = load_dataset(dir.path().join("demos.jsonl"), &EnvConfig::default()).unwrap();
    assert_eq!(data.goal_count(), 4);
}
