use std::path::PathBuf;

use dmsim::{default_suite, multijob_suite, parse_spec, run_experiment, ExperimentSpec};

fn experiments_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../experiments")
}

fn shipped(name: &str) -> ExperimentSpec {
    parse_spec(&std::fs::read_to_string(experiments_dir().join(name)).unwrap()).unwrap()
}

#[test]
fn shipped_specs_match_library_suites() {
    let strip = |s: ExperimentSpec| ExperimentSpec { output: None, ..s };
    assert_eq!(strip(shipped("suite.json")), default_suite());
    assert_eq!(strip(shipped("multijob.json")), multijob_suite());
    let sweep = shipped("sweep_mcs_bandwidth.json");
    assert_eq!(sweep.net_bandwidth_factors, vec![2.0, 4.0, 8.0]);
    assert_eq!(sweep.num_mcs, vec![1, 2, 4]);
}

#[test]
fn shipped_example_csv_is_current() {
    let dir = tempfile::tempdir().unwrap();
    let fresh = dir.path().join("suite.csv");
    run_experiment(&experiments_dir().join("suite.json"), Some(&fresh), 0).unwrap();
    let shipped = std::fs::read(experiments_dir().join("results/suite.csv")).unwrap();
    assert!(std::fs::read(&fresh).unwrap() == shipped, "regenerate experiments/results/suite.csv");
}
