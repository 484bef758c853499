use std::fs;
use std::path::Path;

use context_cd::citest::CitKind;
use context_cd::discovery::{LinkMode, Method};
use context_cd::eval::read_metrics;
use context_cd::experiment::{
    load_trial_metrics, replay, run_experiment, trial_dir, ExperimentConfig, Manifest, FAILED, MANIFEST, METRICS,
    SUMMARY,
};
use context_cd::scm::{CycleMode, EditOp};
use context_cd::Error;

fn small(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        nodes: 5,
        sample_sizes: vec![300],
        trials: 4,
        link_assumptions: vec![LinkMode::None, LinkMode::RChildren],
        master_seed: 11,
        out_dir: out.to_path_buf(),
        bootstrap_iterations: 50,
        save_graphs: true,
        ..ExperimentConfig::default()
    }
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn runs_are_reproducible_and_trials_replay() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let results = run_experiment(&small(a.path())).unwrap();
    run_experiment(&small(b.path())).unwrap();
    assert_eq!(read(a.path().join(SUMMARY)), read(b.path().join(SUMMARY)));
    assert_eq!(read(a.path().join(METRICS)), read(b.path().join(METRICS)));

    let rows = read_metrics(fs::File::open(a.path().join(METRICS)).unwrap()).unwrap();
    for m in Method::ALL {
        assert!(rows.iter().any(|r| r.method == m.as_str() && !r.failed));
    }
    let failed = results.iter().filter(|t| t.generation_failed).count();
    assert_eq!(
        fs::read_to_string(a.path().join(FAILED)).unwrap().trim(),
        failed.to_string()
    );

    let m = Manifest::load(a.path()).unwrap();
    assert_eq!(m.trials.len(), 4);
    let id = results.iter().position(|t| !t.generation_failed).unwrap();
    let dir = a.path().join(trial_dir(id));
    let before: Vec<(std::path::PathBuf, Vec<u8>)> = results[id]
        .outputs
        .iter()
        .map(|p| (p.clone(), read(a.path().join(p))))
        .collect();
    assert!(before.iter().any(|(p, _)| p.ends_with("union.json")));
    fs::remove_dir_all(&dir).unwrap();
    let again = replay(id, a.path()).unwrap();
    assert_eq!(again.rows, results[id].rows);
    assert_eq!(load_trial_metrics(a.path(), id).unwrap(), results[id].rows);
    for (p, bytes) in before {
        assert_eq!(read(a.path().join(&p)), bytes, "{}", p.display());
    }
}

#[test]
fn tampered_or_missing_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(replay(0, dir.path()), Err(Error::Integrity(_))));
    let cfg = ExperimentConfig {
        trials: 1,
        save_graphs: false,
        cit: CitKind::Oracle,
        ..small(dir.path())
    };
    run_experiment(&cfg).unwrap();
    let path = dir.path().join(MANIFEST);
    let text = fs::read_to_string(&path).unwrap();
    fs::write(&path, text.replace("\"master_seed\": 11", "\"master_seed\": 12")).unwrap();
    assert!(matches!(replay(0, dir.path()), Err(Error::Integrity(_))));
}

#[test]
fn oracle_trial_recovers_every_context() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        nodes: 8,
        trials: 3,
        cit: CitKind::Oracle,
        link_assumptions: vec![LinkMode::None],
        methods: vec![Method::Ac, Method::Baseline],
        save_graphs: false,
        ..small(dir.path())
    };
    let results = run_experiment(&cfg).unwrap();
    for row in results
        .iter()
        .flat_map(|t| &t.rows)
        .filter(|r| !r.failed && r.context != "union")
    {
        assert_eq!((row.tpr.unwrap_or(1.0), row.fpr.unwrap_or(0.0)), (1.0, 0.0), "{row:?}");
        assert_eq!(row.n_samples, 0);
    }
}

#[test]
fn generation_failures_are_recorded_and_replayed() {
    // a single link cannot always be removed from a context
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        nodes: 3,
        density: 0.1,
        n_change: 1,
        ops: vec![EditOp::Remove],
        trials: 12,
        cit: CitKind::Oracle,
        save_graphs: false,
        ..small(dir.path())
    };
    let results = run_experiment(&cfg).unwrap();
    let failed: Vec<usize> = results
        .iter()
        .filter(|t| t.generation_failed)
        .map(|t| t.trial_id)
        .collect();
    assert_eq!(
        fs::read_to_string(dir.path().join(FAILED)).unwrap().trim(),
        failed.len().to_string()
    );
    for t in results.iter().filter(|t| t.generation_failed) {
        assert!(t.rows.iter().all(|r| r.failed && r.tpr.is_none()));
        assert!(!dir.path().join(trial_dir(t.trial_id)).join("scm.json").exists());
        let again = replay(t.trial_id, dir.path()).unwrap();
        assert!(again.generation_failed);
    }
    assert!(!failed.is_empty(), "configuration should fail at least once");
}

#[test]
fn impossible_cycle_request_fails_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        cycles: CycleMode::Require,
        ops: vec![EditOp::Remove],
        ..small(dir.path())
    };
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    assert!(!dir.path().join(MANIFEST).exists());
}
