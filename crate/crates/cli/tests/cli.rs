use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_context-cd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_discover_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(&[
        "generate",
        "--nodes",
        "6",
        "--n-samples",
        "800",
        "--seed",
        "3",
        "--out",
        p(&gen),
    ]);
    for f in ["data.csv", "data.meta.json", "scm.json", "ground_truth.json"] {
        assert!(gen.join(f).exists(), "{f}");
    }
    let header = fs::read_to_string(gen.join("data.csv")).unwrap();
    assert!(header.starts_with("X1,X2,X3,X4,X5,R\n"));

    let out = dir.path().join("ac");
    let stdout = ok(&[
        "discover",
        "--data",
        p(&gen.join("data.csv")),
        "--method",
        "ac",
        "--link-assumptions",
        "r-children",
        "--ground-truth",
        p(&gen.join("ground_truth.json")),
        "--test-log",
        "--out",
        p(&out),
    ]);
    assert!(stdout.starts_with("PC-AC"));
    for f in [
        "context_1.json",
        "context_2.json",
        "union.json",
        "labeled_union.json",
        "sepsets.csv",
        "stats.json",
        "metrics.csv",
        "tests.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert!(stats["test_count"].as_u64().unwrap() > 0);
    assert!(fs::read_to_string(out.join("sepsets.csv"))
        .unwrap()
        .starts_with("search,x,y,z,origin,level\n"));

    // scoring the written graphs gives the rows written by discover
    let rescored = ok(&[
        "eval",
        "--pred",
        p(&out),
        "--ground-truth",
        p(&gen.join("ground_truth.json")),
    ]);
    assert_eq!(rescored, fs::read_to_string(out.join("metrics.csv")).unwrap());
}

#[test]
fn oracle_discovery_needs_only_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    ok(&["generate", "--n-samples", "50", "--seed", "5", "--out", p(&gen)]);
    let out = dir.path().join("oracle");
    let gt = gen.join("ground_truth.json");
    ok(&[
        "discover",
        "--cit",
        "oracle",
        "--method",
        "baseline",
        "--ground-truth",
        p(&gt),
        "--out",
        p(&out),
    ]);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    for line in metrics.lines().skip(1).filter(|l| !l.contains(",union,")) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!((f[6], f[7]), ("1", "0"), "{line}");
    }
    let err = cli(&["discover", "--cit", "oracle", "--out", p(&out)]);
    assert!(!err.status.success());
    assert!(String::from_utf8_lossy(&err.stderr).contains("--ground-truth"));
}

#[test]
fn experiment_replay_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let results = dir.path().join("results");
    fs::write(
        &cfg,
        r#"
nodes = 5
density = 0.4
n_contexts = 2
balance = 1.0
n_change = 1
ops = ["remove"]
cycles = "forbid"
sample_sizes = [200]
trials = 3
alpha = 0.05
methods = ["ac", "masked", "pooled", "baseline"]
link_assumptions = ["none"]
cit = "parcorr-mixed"
master_seed = 4
out_dir = "unused"
bootstrap_iterations = 40
"#,
    )
    .unwrap();
    ok(&["experiment", "--config", p(&cfg), "--out-dir", p(&results)]);
    for f in ["metrics.csv", "summary.csv", "failed.txt", "manifest.json"] {
        assert!(results.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(results.join("summary.csv")).unwrap();
    let again = ok(&[
        "eval",
        "--metrics",
        p(&results.join("metrics.csv")),
        "--iterations",
        "40",
        "--seed",
        "4",
    ]);
    assert_eq!(again, summary);

    let trial = results.join("trials/trial_0001/metrics.csv");
    let before = fs::read(&trial).unwrap();
    fs::remove_file(&trial).unwrap();
    ok(&["replay", "--dir", p(&results), "--trial", "1"]);
    assert_eq!(fs::read(&trial).unwrap(), before);
}

#[test]
fn bad_inputs_fail_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        r#"
nodes = 8
density = 0.4
n_contexts = 2
balance = 1.0
n_change = 1
ops = ["remove"]
cycles = "require"
sample_sizes = [200]
trials = 3
alpha = 0.05
methods = ["ac"]
link_assumptions = ["none"]
cit = "parcorr-mixed"
master_seed = 4
out_dir = "x"
"#,
    )
    .unwrap();
    let out = cli(&["experiment", "--config", p(&cfg), "--out-dir", p(&dir.path().join("x"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid configuration"));

    let out = cli(&["replay", "--dir", p(dir.path()), "--trial", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));

    let out = cli(&["discover", "--method", "nonsense", "--out", "x"]);
    assert!(!out.status.success());
}
