mod common;

use std::fs;
use std::path::Path;

use mfg_nash::config::ExperimentConfig;
use mfg_nash::pipeline::{
    fit_rate_csv, run_certify, run_solve, run_validate, with_threads, ExitStatus, RunManifest, FLOW_FILE,
    FLOW_SUMMARY_FILE, PLOT_CSV_FILE, POLICY_FILE, REPORT_CSV_FILE, REPORT_FILE, SOLVE_MANIFEST_FILE,
};
use mfg_nash::Error;

fn configs_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configurations_resolve() {
    let mut seen = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            cfg.resolve().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(run_validate(&cfg).unwrap().passed(), "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 4);
}

#[test]
fn solve_then_certify() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_toy();
    let solved = run_solve(&cfg, dir.path()).unwrap();
    assert_eq!(solved.status, ExitStatus::Pass);
    for f in [POLICY_FILE, FLOW_FILE, FLOW_SUMMARY_FILE, SOLVE_MANIFEST_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let out = dir.path().join("cert");
    let cert = run_certify(&cfg, dir.path(), &out).unwrap();
    for f in [REPORT_FILE, REPORT_CSV_FILE, PLOT_CSV_FILE] {
        assert!(out.join(f).exists(), "{f}");
    }
    let expected = if cert.report.passed {
        ExitStatus::Pass
    } else {
        ExitStatus::CertificationFailed
    };
    assert_eq!(cert.status, expected);
    // the artifacts on disk certify exactly like the in-memory solution
    let mem = common::solve(&cfg);
    let direct = mfg_nash::cert::certify(&mem.spec, &mem.policy, &mem.flow, &cfg.certify_config()).unwrap();
    assert_eq!(direct, cert.report);
}

#[test]
fn changed_solver_settings_are_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_toy();
    run_solve(&cfg, dir.path()).unwrap();
    let mut other = cfg.clone();
    other.solver.particles += 1;
    let err = run_certify(&other, dir.path(), &dir.path().join("c")).err().unwrap();
    assert!(matches!(err, Error::Data(_)));
    assert_eq!(ExitStatus::of_error(&err), ExitStatus::Failure);
    // certification-only settings do not invalidate the artifacts
    let mut ladder = cfg.clone();
    ladder.ladder.reps = 10;
    assert!(run_certify(&ladder, dir.path(), &dir.path().join("c")).is_ok());
    let missing = run_certify(&cfg, &dir.path().join("nowhere"), &dir.path().join("c")).err().unwrap();
    assert!(matches!(missing, Error::Data(_)));
}

#[test]
fn non_convergence_still_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::small_toy();
    cfg.solver.tol = 0.0;
    cfg.solver.max_iter = 2;
    let solved = run_solve(&cfg, dir.path()).unwrap();
    assert_eq!(solved.status, ExitStatus::NotConverged);
    assert_eq!(solved.status.code(), 2);
    assert!(dir.path().join(POLICY_FILE).exists());
    let manifest: RunManifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join(SOLVE_MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.solver_hash, cfg.solver_hash());
}

#[test]
fn invalid_configuration_maps_to_exit_four() {
    let mut cfg = common::small_toy();
    cfg.grid.steps = 5;
    let err = run_validate(&cfg).err().unwrap();
    assert_eq!(ExitStatus::of_error(&err).code(), 4);
    let err = ExperimentConfig::from_toml_str("[model]\nname = \"toy-interbank\"\n[solver]\nparticlez = 3\n")
        .err()
        .unwrap();
    assert_eq!(ExitStatus::of_error(&err).code(), 4);
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = common::small_toy();
    let a = with_threads(Some(1), || {
        let s = common::solve(&cfg);
        mfg_nash::cert::certify(&s.spec, &s.policy, &s.flow, &cfg.certify_config()).unwrap()
    })
    .unwrap();
    let b = with_threads(Some(3), || {
        let s = common::solve(&cfg);
        mfg_nash::cert::certify(&s.spec, &s.policy, &s.flow, &cfg.certify_config()).unwrap()
    })
    .unwrap();
    assert_eq!(a, b);
    assert!(with_threads(Some(0), || ()).is_err());
}

#[test]
fn rate_fit_input() {
    let f = fit_rate_csv("n,y\n100,0.01\n400,0.0025\n1600,0.000625\n".as_bytes()).unwrap();
    assert!((f.slope + 1.0).abs() < 1e-12);
    assert!(fit_rate_csv("100,0.01\n".as_bytes()).is_err());
}

#[test]
fn configuration_text_round_trips() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
            assert_eq!(cfg, again);
            assert_eq!(cfg.config_hash(), again.config_hash());
        }
    }
}
