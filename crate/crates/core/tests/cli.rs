use std::path::Path;
use std::process::{Command, Output};

fn stepwise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stepwise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_expert(dir: &Path, name: &str, env: &str, count: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let res = stepwise(&[
        "gen-expert",
        "--env",
        env,
        "--count",
        count,
        "--seed",
        "3",
        "--out",
        path(&out),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    out
}

#[test]
fn gen_expert_is_deterministic_and_successful() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read_to_string(gen_expert(dir.path(), "a.jsonl", "grid", "200")).unwrap();
    let b = std::fs::read_to_string(gen_expert(dir.path(), "b.jsonl", "grid", "200")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 200);
    for line in a.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["final_reward"].as_f64(), Some(1.0), "{line}");
    }
}

#[test]
fn zero_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let res = stepwise(&[
        "gen-expert",
        "--env",
        "grid",
        "--count",
        "0",
        "--out",
        path(&out),
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn unknown_env_and_bad_flags_exit_one() {
    let res = stepwise(&[
        "gen-expert",
        "--env",
        "maze",
        "--count",
        "3",
        "--out",
        "x.jsonl",
    ]);
    assert_eq!(res.status.code(), Some(1));
    let res = stepwise(&["train", "--iters", "many"]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "schema_version = 1\nalgo = \"implicit\"\nreward_mode = \"final\"\n",
    )
    .unwrap();
    let res = stepwise(&["train", "--config", path(&cfg)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).starts_with("error:"));

    std::fs::write(&cfg, "schema_version = 1\nlearning_rate = 0.1\n").unwrap();
    let res = stepwise(&["train", "--config", path(&cfg)]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn missing_dataset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let res = stepwise(&[
        "train",
        "--dataset",
        path(&missing),
        "--out",
        path(&dir.path().join("run")),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_expert(dir.path(), "grid.jsonl", "grid", "20");
    let run = dir.path().join("run");
    let res = stepwise(&[
        "train",
        "--env",
        "grid",
        "--algo",
        "implicit",
        "--dataset",
        path(&data),
        "--iters",
        "1",
        "--practice",
        "2",
        "--seeds",
        "0,1",
        "--out",
        path(&run),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for f in [
        "config.snapshot",
        "metrics.csv",
        "train_metrics.csv",
        "run.log",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    // Header plus iterations 0 and 1 for two seeds.
    assert_eq!(metrics.lines().count(), 5);

    let ckpt = run.join("checkpoints/iter_1/policy_seed0.json");
    assert!(ckpt.is_file());
    let res = stepwise(&[
        "eval",
        "--checkpoint",
        path(&ckpt),
        "--env",
        "grid",
        "--episodes",
        "50",
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(String::from_utf8_lossy(&res.stdout).contains("success"));

    // A checkpoint cannot be evaluated on an env it was not built for.
    let res = stepwise(&[
        "eval",
        "--checkpoint",
        path(&ckpt),
        "--env",
        "chainkey",
        "--episodes",
        "5",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn corrupt_checkpoint_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("policy.json");
    std::fs::write(&ckpt, "{\"format_version\": 1}").unwrap();
    let res = stepwise(&["eval", "--checkpoint", path(&ckpt), "--env", "grid"]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("checkpoint field `format`"), "{err}");
}
