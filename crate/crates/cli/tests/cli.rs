use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mfg_nash::config::ExperimentConfig;

fn mfgnash(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfgnash")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn small() -> ExperimentConfig {
    let mut c = ExperimentConfig::for_model("toy-interbank");
    c.grid.steps = 20;
    c.grid.space_nodes = 161;
    c.grid.action_points = 17;
    c.solver.particles = 2000;
    c.ladder.n = vec![10, 20, 40];
    c.ladder.reps = 40;
    c.certify.bootstrap = 50;
    c.certify.reference_factor = 0;
    c.dictionary.fine_action_points = 33;
    c
}

fn write(dir: &Path, name: &str, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

#[test]
fn solve_and_certify_report_their_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write(dir.path(), "small.toml", &small());
    let (cfg, out) = (cfg.to_str().unwrap(), out.to_str().unwrap());

    let solved = mfgnash(&["solve", "--config", cfg, "--out", out, "--threads", "1"]);
    assert_eq!(code(&solved), 0, "{}", String::from_utf8_lossy(&solved.stderr));
    assert!(String::from_utf8_lossy(&solved.stderr).contains("converged"));

    let cert = mfgnash(&["certify", "--config", cfg, "--out", out, "--threads", "2"]);
    let c = code(&cert);
    assert!(c == 0 || c == 3, "{}", String::from_utf8_lossy(&cert.stderr));
    assert!(Path::new(out).join("report.json").exists());
    assert!(String::from_utf8_lossy(&cert.stderr).contains("chain"));
}

#[test]
fn failed_checks_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    // no gap can grow this fast
    c.thresholds.deviation_slope = [5.0, 6.0];
    let cfg = write(dir.path(), "strict.toml", &c);
    let out = dir.path().join("run");
    let (cfg, out) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(code(&mfgnash(&["solve", "--config", cfg, "--out", out])), 0);
    let cert = mfgnash(&["certify", "--config", cfg, "--out", out]);
    assert_eq!(code(&cert), 3);
    assert!(String::from_utf8_lossy(&cert.stderr).contains("FAIL deviation_stability.slope"));
}

#[test]
fn non_convergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.solver.tol = 0.0;
    c.solver.max_iter = 2;
    let cfg = write(dir.path(), "tight.toml", &c);
    let out = dir.path().join("run");
    let o = mfgnash(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(out.join("policy.csv").exists());
    assert!(out.join("fixed_point.json").exists());
}

#[test]
fn stale_artifacts_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let c = small();
    let mut other = c.clone();
    other.solver.particles += 10;
    let a = write(dir.path(), "a.toml", &c);
    let b = write(dir.path(), "b.toml", &other);
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert_eq!(code(&mfgnash(&["solve", "--config", a.to_str().unwrap(), "--out", out])), 0);
    let o = mfgnash(&["certify", "--config", b.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_configuration_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let typo = dir.path().join("typo.toml");
    fs::write(&typo, "[model]\nname = \"toy-interbank\"\n[solver]\nparticlez = 10\n").unwrap();
    assert_eq!(code(&mfgnash(&["validate", "--config", typo.to_str().unwrap()])), 4);
    assert_eq!(code(&mfgnash(&["solve", "--config", typo.to_str().unwrap()])), 4);

    let mut c = small();
    c.grid.steps = 5;
    let coarse = write(dir.path(), "coarse.toml", &c);
    assert_eq!(code(&mfgnash(&["validate", "--config", coarse.to_str().unwrap()])), 4);
}

#[test]
fn shipped_configurations_validate() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        let o = mfgnash(&["validate", "--config", path.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", path.display());
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(v.is_object());
    }
}

#[test]
fn rate_fit_reads_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("gaps.csv");
    fs::write(&csv, "n,value\n10,0.1\n40,0.05\n160,0.025\n").unwrap();
    let o = mfgnash(&["rate-fit", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["slope"].as_f64().unwrap() + 0.5).abs() < 1e-12);
    fs::write(&csv, "n,value\n10,0.1\n").unwrap();
    assert_ne!(code(&mfgnash(&["rate-fit", csv.to_str().unwrap()])), 0);
}

#[test]
fn list_models_names_the_catalogue() {
    let o = mfgnash(&["list-models"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["toy-interbank", "lq-riccati", "decoupled", "frozen"] {
        assert!(text.contains(name), "{name}");
    }
}
