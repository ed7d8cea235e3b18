//! Config-driven runs with on-disk artifacts and exit-code semantics.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cert::{certify, CertificationReport};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::measure::{fit_rate, RateFit};
use crate::sde::{validate_coefficients, ProbePlan, SeedRecord, ValidationReport};
use crate::solver::{
    initial_flow, picard_iterate, read_flow_binary, write_flow_binary, write_flow_summary, FeedbackPolicy,
    FixedPointReport,
};

/// Stream context of the starting flow.
pub const INITIAL_FLOW_CONTEXT: u64 = 0x494e_4954;

pub const POLICY_FILE: &str = "policy.csv";
pub const FLOW_FILE: &str = "flow.bin";
pub const FLOW_SUMMARY_FILE: &str = "flow_summary.csv";
pub const FIXED_POINT_FILE: &str = "fixed_point.json";
pub const SOLVE_MANIFEST_FILE: &str = "solve_manifest.json";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const PLOT_CSV_FILE: &str = "report_plot.csv";
pub const CERTIFY_MANIFEST_FILE: &str = "certify_manifest.json";

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Pass = 0,
    Failure = 1,
    NotConverged = 2,
    CertificationFailed = 3,
    InvalidConfig = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of_error(e: &Error) -> Self {
        match e {
            Error::Config(_) => ExitStatus::InvalidConfig,
            _ => ExitStatus::Failure,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Provenance of a run. Timings vary between runs; everything else is a
/// function of the configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub config_hash: String,
    pub solver_hash: String,
    pub master_seed: u64,
    pub timings: Vec<StageTiming>,
}

impl RunManifest {
    fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.config_hash(),
            solver_hash: cfg.solver_hash(),
            master_seed: cfg.seeds.master,
            timings: Vec::new(),
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub struct SolveOutcome {
    pub policy: FeedbackPolicy,
    pub report: FixedPointReport,
    pub manifest: RunManifest,
    pub status: ExitStatus,
}

/// Solves the mean-field game and writes policy, flow, fixed-point report
/// and manifest into `out`. Non-convergence still writes every artifact.
pub fn run_solve(cfg: &ExperimentConfig, out: &Path) -> Result<SolveOutcome> {
    let setup = cfg.resolve()?;
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("solve", cfg);
    let picard = cfg.picard();
    let init = manifest.time("initial-flow", || {
        initial_flow(
            &setup.spec,
            &setup.grid,
            picard.particles,
            SeedRecord::new(cfg.seeds.master, INITIAL_FLOW_CONTEXT, 0),
        )
    })?;
    let (policy, flow, report) =
        manifest.time("fixed-point", || picard_iterate(&setup.spec, &init, &setup.space, &picard))?;
    manifest.time("write", || {
        let mut w = create(out, POLICY_FILE)?;
        policy.write_csv(&mut w)?;
        w.flush()?;
        let mut w = create(out, FLOW_FILE)?;
        write_flow_binary(&flow, &mut w)?;
        w.flush()?;
        let mut w = create(out, FLOW_SUMMARY_FILE)?;
        write_flow_summary(&flow, &mut w)?;
        w.flush()?;
        write_json(out, FIXED_POINT_FILE, &report)
    })?;
    write_json(out, SOLVE_MANIFEST_FILE, &manifest)?;
    let status = if report.converged {
        ExitStatus::Pass
    } else {
        ExitStatus::NotConverged
    };
    Ok(SolveOutcome {
        policy,
        report,
        manifest,
        status,
    })
}

pub struct CertifyOutcome {
    pub report: CertificationReport,
    pub manifest: RunManifest,
    pub status: ExitStatus,
}

/// Certifies the solver artifacts in `artifacts` and writes the reports
/// into `out`. Refuses artifacts produced under different solver settings.
pub fn run_certify(cfg: &ExperimentConfig, artifacts: &Path, out: &Path) -> Result<CertifyOutcome> {
    let setup = cfg.resolve()?;
    let solved: RunManifest = serde_json::from_reader(BufReader::new(
        File::open(artifacts.join(SOLVE_MANIFEST_FILE))
            .map_err(|e| Error::Data(format!("no solver artifacts in {}: {e}", artifacts.display())))?,
    ))?;
    let expected = cfg.solver_hash();
    if solved.solver_hash != expected {
        return Err(Error::Data(format!(
            "solver artifacts in {} were produced with settings hash {}, this configuration has {}; \
             re-run solve with this configuration",
            artifacts.display(),
            solved.solver_hash,
            expected
        )));
    }
    let policy = FeedbackPolicy::read_csv(
        BufReader::new(File::open(artifacts.join(POLICY_FILE))?),
        *setup.spec.actions(),
    )?;
    let flow = read_flow_binary(BufReader::new(File::open(artifacts.join(FLOW_FILE))?))?;
    let policy = if cfg.certify.corrupt_amplitude != 0.0 {
        policy.with_oscillation(cfg.certify.corrupt_amplitude, cfg.certify.corrupt_period)
    } else {
        policy
    };
    std::fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new("certify", cfg);
    let report = manifest.time("certify", || certify(&setup.spec, &policy, &flow, &cfg.certify_config()))?;
    manifest.time("write", || {
        let mut w = create(out, REPORT_FILE)?;
        report.write_json(&mut w)?;
        w.write_all(b"\n")?;
        w.flush()?;
        let mut w = create(out, REPORT_CSV_FILE)?;
        report.write_csv(&mut w)?;
        w.flush()?;
        let mut w = create(out, PLOT_CSV_FILE)?;
        report.write_plot_csv(&mut w)?;
        w.flush()?;
        Ok(())
    })?;
    write_json(out, CERTIFY_MANIFEST_FILE, &manifest)?;
    let status = if report.passed {
        ExitStatus::Pass
    } else {
        ExitStatus::CertificationFailed
    };
    Ok(CertifyOutcome {
        report,
        manifest,
        status,
    })
}

/// Reads `n,value` rows (an optional header line is skipped) and fits the
/// log-log slope.
pub fn fit_rate_csv<R: BufRead>(input: R) -> Result<RateFit> {
    let mut n = Vec::new();
    let mut y = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (a, b) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(a), Ok(b)) => {
                n.push(a);
                y.push(b);
            }
            _ if i == 0 => continue,
            _ => return Err(Error::Data(format!("line {}: expected 'n,value', got '{line}'", i + 1))),
        }
    }
    fit_rate(&n, &y)
}

/// Checks the configuration and probes the model's declared bounds.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let setup = cfg.resolve()?;
    Ok(validate_coefficients(&setup.spec, &ProbePlan::standard(&setup.spec, setup.grid.horizon())))
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global
/// pool when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("--threads must be positive".into())),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Output directory of a configuration, overridable by the caller.
pub fn output_dir(cfg: &ExperimentConfig, overridden: Option<&Path>) -> PathBuf {
    overridden.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}
