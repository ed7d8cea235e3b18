//! Empirical certification that the mean-field policy is an approximate
//! Nash equilibrium of the n-player game, with rate fits over a ladder of n.

mod dictionary;
mod report;

pub use dictionary::{DeviationDictionary, DictionaryEntry, DictionarySpec};
pub use report::{
    CertificationReport, ChainCheck, Check, EntryCosts, Estimate, QuantityFit, RungReport, SCHEMA_VERSION,
};

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{replication_inputs, run_system, CostEstimate, MeasureSource, RunOptions, Strategy, StrategyProfile, SystemRun};
use crate::measure::{fit_rate_guarded, mean_stderr, wasserstein2_squared, MeasureFlow, QuantileTable, RateFit};
use crate::rng::{stream, Purpose, StreamKey};
use crate::sde::{ModelSpec, SeedRecord};
use crate::solver::{push_forward, FeedbackPolicy};

/// Stream context of the refined reference flow.
pub const REFERENCE_CONTEXT: u64 = 0x5245_4645;

/// Pass/fail thresholds applied to a certification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Coupling and state gaps: slope must not exceed `-alpha + coupling_slack`.
    pub coupling_slack: f64,
    /// Admissible slope interval of the deviation-stability gap.
    pub deviation_slope: [f64; 2],
    /// Surrogate gaps: slope must not exceed `-alpha/2 + surrogate_slack`.
    pub surrogate_slack: f64,
    /// Epsilon: slope must not exceed `-alpha/2 + epsilon_slack`.
    pub epsilon_slack: f64,
    /// Epsilon at the last rung must sit this many combined standard errors
    /// below the first rung.
    pub epsilon_decay_sigmas: f64,
    /// Tolerance of the inequality chain, in combined standard errors.
    pub chain_sigmas: f64,
    /// Largest admissible spread (max / min) of the deviation-stability gap
    /// across the extreme entries of the dictionary (endpoint constants and
    /// bang-bang switches).
    pub uniformity_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            coupling_slack: 0.2,
            deviation_slope: [-1.25, -0.75],
            surrogate_slack: 0.2,
            epsilon_slack: 0.25,
            epsilon_decay_sigmas: 3.0,
            chain_sigmas: 3.0,
            uniformity_factor: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyConfig {
    pub ladder: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub bootstrap: usize,
    /// The reference flow is re-sampled with `reference_factor * max(ladder)`
    /// particles when that exceeds its atom count; 0 keeps it as given.
    pub reference_factor: usize,
    pub dictionary: DictionarySpec,
    pub thresholds: Thresholds,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            ladder: vec![50, 100, 200, 400, 800, 1600],
            reps: 400,
            seed: 7,
            bootstrap: 200,
            reference_factor: 20,
            dictionary: DictionarySpec::default(),
            thresholds: Thresholds::default(),
        }
    }
}

/// The `n` players all following `policy`, each on its own state.
pub fn build_candidate_profile(policy: &Arc<FeedbackPolicy>, n: usize) -> Result<StrategyProfile> {
    StrategyProfile::uniform(Strategy::Feedback(policy.clone()), n)
}

/// One replication of the four synchronously coupled systems.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    /// All players on the candidate, interacting through `mu^n`.
    pub x_hat: SystemRun,
    /// Player 0 deviates to `eta`, interacting through `mu~^n`.
    pub x_tilde: SystemRun,
    /// All players on the candidate against the frozen reference flow.
    pub y: SystemRun,
    /// Player 0 alone on `eta` against the frozen reference flow.
    pub y_tilde: SystemRun,
}

fn recorded() -> RunOptions<'static> {
    RunOptions {
        record_states: true,
        record_measures: true,
        ..Default::default()
    }
}

/// Simulates the coupled systems for `reps` replications. Replication `r`
/// draws initial states and noise from `(seed, n, r)`, shared by all four
/// systems player by player.
#[allow(clippy::too_many_arguments)]
pub fn simulate_couplings(
    spec: &ModelSpec,
    policy: &Arc<FeedbackPolicy>,
    mu_hat: &MeasureFlow,
    eta: &Strategy,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<CoupledRun>> {
    let grid = mu_hat.grid();
    let profile = build_candidate_profile(policy, n)?;
    let deviated = profile.deviate(0, eta.clone())?;
    let single = StrategyProfile::uniform(eta.clone(), 1)?;
    let opts = recorded();
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let (xi, noise) = replication_inputs(spec, grid, n, SeedRecord::new(seed, n as u64, r as u64))?;
            let frozen = MeasureSource::Frozen(mu_hat);
            Ok(CoupledRun {
                x_hat: run_system(spec, &profile, grid, &xi, &noise, MeasureSource::Empirical, &opts)?,
                x_tilde: run_system(spec, &deviated, grid, &xi, &noise, MeasureSource::Empirical, &opts)?,
                y: run_system(spec, &profile, grid, &xi, &noise, frozen, &opts)?,
                y_tilde: run_system(spec, &single, grid, &xi, &noise, frozen, &opts)?,
            })
        })
        .collect()
}

/// Per-replication observations for one dictionary entry.
#[derive(Clone, Debug, Default)]
struct EntrySample {
    /// Cost of player 0 when deviating, in the n-player system.
    j_hat: f64,
    /// Same path, cost evaluated against the reference flow.
    j_surrogate: f64,
    /// Cost of the lone deviator against the reference flow.
    j_limit: f64,
    /// `d_W(mu^n_k, mu~^n_k)^2` per node.
    stability: Vec<f64>,
    /// `(1/n) sum_i |X^i_k - X~^i_k|^2` per node.
    identity: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
struct RepSample {
    coupling: Vec<f64>,
    state_gap: Vec<f64>,
    entries: Vec<EntrySample>,
    clamped: u64,
}

struct Context<'a> {
    spec: &'a ModelSpec,
    policy: Arc<FeedbackPolicy>,
    mu_hat: &'a MeasureFlow,
    tables: Vec<QuantileTable>,
    dictionary: &'a DeviationDictionary,
}

impl Context<'_> {
    fn replicate(&self, n: usize, seed: SeedRecord) -> Result<RepSample> {
        let spec = self.spec;
        let grid = self.mu_hat.grid();
        let nodes = grid.steps() + 1;
        let profile = build_candidate_profile(&self.policy, n)?;
        let (xi, noise) = replication_inputs(spec, grid, n, seed)?;
        let frozen = MeasureSource::Frozen(self.mu_hat);
        let opts = RunOptions {
            record_states: true,
            record_measures: true,
            surrogate: Some(self.mu_hat),
            surrogate_players: 1,
            ..Default::default()
        };
        let x_hat = run_system(spec, &profile, grid, &xi, &noise, MeasureSource::Empirical, &opts)?;
        let states_only = RunOptions {
            record_states: true,
            ..Default::default()
        };
        let y = run_system(spec, &profile, grid, &xi, &noise, frozen, &states_only)?;
        let mut clamped = x_hat.clamped + y.clamped;

        let coupling: Vec<f64> = (0..nodes).map(|k| self.tables[k].distance_squared(&x_hat.measures[k])).collect();
        let state_gap: Vec<f64> = (0..nodes)
            .map(|k| {
                x_hat.layer(k).iter().zip(y.layer(k)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64
            })
            .collect();

        let mut entries = Vec::with_capacity(self.dictionary.len());
        for entry in self.dictionary.entries() {
            let deviated = profile.deviate(0, entry.strategy.clone())?;
            let x_tilde = run_system(spec, &deviated, grid, &xi, &noise, MeasureSource::Empirical, &opts)?;
            let single = StrategyProfile::uniform(entry.strategy.clone(), 1)?;
            let y_tilde = run_system(spec, &single, grid, &xi, &noise, frozen, &RunOptions::default())?;
            clamped += x_tilde.clamped + y_tilde.clamped;
            let stability = (0..nodes)
                .map(|k| wasserstein2_squared(&x_hat.measures[k], &x_tilde.measures[k]))
                .collect();
            let identity = (0..nodes)
                .map(|k| {
                    x_hat.layer(k).iter().zip(x_tilde.layer(k)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                        / n as f64
                })
                .collect();
            entries.push(EntrySample {
                j_hat: x_tilde.costs[0],
                j_surrogate: x_tilde.surrogate_costs[0],
                j_limit: y_tilde.costs[0],
                stability,
                identity,
            });
        }
        // entry 0 is the candidate: its deviation run is the X-hat system
        debug_assert_eq!(entries[0].j_hat.to_bits(), x_hat.costs[0].to_bits());
        Ok(RepSample {
            coupling,
            state_gap,
            entries,
            clamped,
        })
    }
}

/// Mean over replications per node, then the node with the largest mean.
fn sup_of_means(per_rep: &[&[f64]]) -> Estimate {
    let nodes = per_rep[0].len();
    let mut best = Estimate::default();
    for k in 0..nodes {
        let col: Vec<f64> = per_rep.iter().map(|v| v[k]).collect();
        let (m, se) = mean_stderr(&col);
        if k == 0 || m > best.estimate {
            best = Estimate { estimate: m, stderr: se };
        }
    }
    best
}

/// `max_eta [mean_r(J(candidate) - J(eta))]^+` and the maximising entry.
fn epsilon_of(gains: &[Vec<f64>], idx: Option<&[usize]>) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (e, g) in gains.iter().enumerate() {
        let m = match idx {
            Some(ix) => ix.iter().map(|&i| g[i]).sum::<f64>() / ix.len() as f64,
            None => g.iter().sum::<f64>() / g.len() as f64,
        };
        if m > best.0 {
            best = (m, e);
        }
    }
    (best.0.max(0.0), best.1)
}

fn bootstrap_stderr(gains: &[Vec<f64>], resamples: usize, seed: u64, n: usize) -> f64 {
    let reps = gains[0].len();
    if resamples < 2 || reps < 2 {
        return 0.0;
    }
    let mut rng = stream(seed, StreamKey::new(Purpose::Bootstrap, n as u64, 0, 0));
    let mut idx = vec![0usize; reps];
    let draws: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in idx.iter_mut() {
                *slot = rng.random_range(0..reps);
            }
            epsilon_of(gains, Some(&idx)).0
        })
        .collect();
    let (_, se) = mean_stderr(&draws);
    // mean_stderr divides by sqrt(k); the bootstrap wants the plain sd
    se * (draws.len() as f64).sqrt()
}

fn summarise(n: usize, samples: &[RepSample], dictionary: &DeviationDictionary, cfg: &CertifyConfig) -> RungReport {
    let reps = samples.len();
    let col = |f: &dyn Fn(&RepSample) -> &[f64]| -> Vec<&[f64]> { samples.iter().map(f).collect() };
    let coupling = sup_of_means(&col(&|s| &s.coupling));
    let state_gap = sup_of_means(&col(&|s| &s.state_gap));

    let cand: Vec<f64> = samples.iter().map(|s| s.entries[0].j_hat).collect();
    let cand_limit: Vec<f64> = samples.iter().map(|s| s.entries[0].j_limit).collect();
    let mut entries = Vec::with_capacity(dictionary.len());
    let mut gains = Vec::with_capacity(dictionary.len());
    for (e, entry) in dictionary.entries().iter().enumerate() {
        let j_hat: Vec<f64> = samples.iter().map(|s| s.entries[e].j_hat).collect();
        let j_sur: Vec<f64> = samples.iter().map(|s| s.entries[e].j_surrogate).collect();
        let j_lim: Vec<f64> = samples.iter().map(|s| s.entries[e].j_limit).collect();
        let gain: Vec<f64> = cand.iter().zip(&j_hat).map(|(c, j)| c - j).collect();
        let model_gap: Vec<f64> = j_hat.iter().zip(&j_sur).map(|(a, b)| a - b).collect();
        let limit_gap: Vec<f64> = j_sur.iter().zip(&j_lim).map(|(a, b)| a - b).collect();
        let stability = sup_of_means(&samples.iter().map(|s| s.entries[e].stability.as_slice()).collect::<Vec<_>>());
        let identity = sup_of_means(&samples.iter().map(|s| s.entries[e].identity.as_slice()).collect::<Vec<_>>());
        entries.push(EntryCosts {
            label: entry.label.clone(),
            kind: entry.strategy.kind().to_string(),
            extreme: entry.extreme,
            j_hat: CostEstimate::from_samples(&j_hat),
            j_surrogate: CostEstimate::from_samples(&j_sur),
            j_limit: CostEstimate::from_samples(&j_lim),
            gain: CostEstimate::from_samples(&gain),
            model_gap: CostEstimate::from_samples(&model_gap),
            limit_gap: CostEstimate::from_samples(&limit_gap),
            deviation_stability: stability,
            identity_coupling: identity,
        });
        gains.push(gain);
    }
    let (eps, arg) = epsilon_of(&gains, None);
    let eps_se = bootstrap_stderr(&gains, cfg.bootstrap, cfg.seed, n);
    let pick_max = |f: &dyn Fn(&EntryCosts) -> Estimate| {
        entries.iter().map(f).fold(Estimate::default(), |a, b| if b.estimate > a.estimate { b } else { a })
    };
    let abs_est = |c: &CostEstimate| Estimate {
        estimate: c.mean.abs(),
        stderr: c.stderr,
    };
    RungReport {
        n,
        reps,
        epsilon: Estimate {
            estimate: eps,
            stderr: eps_se,
        },
        epsilon_argmax: entries[arg].label.clone(),
        coupling_gap: coupling,
        state_gap,
        deviation_stability: pick_max(&|e| e.deviation_stability),
        identity_coupling: pick_max(&|e| e.identity_coupling),
        surrogate_model_gap: pick_max(&|e| abs_est(&e.model_gap)),
        surrogate_limit_gap: pick_max(&|e| abs_est(&e.limit_gap)),
        candidate_limit: CostEstimate::from_samples(&cand_limit),
        entries,
        clamped_actions: samples.iter().map(|s| s.clamped).sum(),
    }
}

/// Reference flow used for the frozen systems and the coupling gap.
pub fn refine_reference(
    spec: &ModelSpec,
    policy: &FeedbackPolicy,
    mu_hat: &MeasureFlow,
    atoms: usize,
    seed: u64,
) -> Result<MeasureFlow> {
    if atoms <= mu_hat.atoms_per_node() {
        return Ok(mu_hat.clone());
    }
    push_forward(spec, policy, mu_hat, atoms, SeedRecord::new(seed, REFERENCE_CONTEXT, 0))
}

/// Runs one rung of the ladder.
fn run_rung(ctx: &Context<'_>, n: usize, cfg: &CertifyConfig) -> Result<RungReport> {
    if n == 0 || cfg.reps < 2 {
        return Err(Error::InvalidArgument(format!("rung n = {n} with {} replications", cfg.reps)));
    }
    let samples = (0..cfg.reps)
        .into_par_iter()
        .map(|r| ctx.replicate(n, SeedRecord::new(cfg.seed, n as u64, r as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarise(n, &samples, ctx.dictionary, cfg))
}

/// Runs the whole ladder against an explicit dictionary. `mu_hat` is used
/// as given.
pub fn certify_with_dictionary(
    spec: &ModelSpec,
    policy: &Arc<FeedbackPolicy>,
    mu_hat: &MeasureFlow,
    dictionary: &DeviationDictionary,
    cfg: &CertifyConfig,
) -> Result<CertificationReport> {
    if dictionary.is_empty() {
        return Err(Error::InvalidArgument("empty deviation dictionary".into()));
    }
    if cfg.ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("ladder must be strictly increasing".into()));
    }
    let ctx = Context {
        spec,
        policy: policy.clone(),
        mu_hat,
        tables: mu_hat.measures().par_iter().map(QuantileTable::new).collect(),
        dictionary,
    };
    let mut rungs = Vec::new();
    let mut errors = Vec::new();
    for &n in &cfg.ladder {
        match run_rung(&ctx, n, cfg) {
            Ok(r) => rungs.push(r),
            Err(e) => errors.push(format!("n = {n}: {e}")),
        }
    }
    Ok(CertificationReport::assemble(spec, dictionary, mu_hat.atoms_per_node(), cfg, rungs, errors))
}

/// Builds the dictionary and the reference flow, then certifies.
pub fn certify(
    spec: &ModelSpec,
    policy: &FeedbackPolicy,
    mu_hat: &MeasureFlow,
    cfg: &CertifyConfig,
) -> Result<CertificationReport> {
    let policy = Arc::new(policy.clone());
    let max_n = cfg.ladder.iter().copied().max().unwrap_or(0);
    let reference = refine_reference(spec, &policy, mu_hat, cfg.reference_factor * max_n, cfg.seed)?;
    let dictionary = DeviationDictionary::build(spec, &policy, &reference, &cfg.dictionary)?;
    certify_with_dictionary(spec, &policy, &reference, &dictionary, cfg)
}

/// Gap tables of the coupling estimates with their fits.
pub fn coupling_gaps(report: &CertificationReport) -> Vec<&QuantityFit> {
    report
        .fits
        .iter()
        .filter(|f| matches!(f.quantity.as_str(), "coupling_gap" | "state_gap" | "deviation_stability"))
        .collect()
}

pub fn surrogate_gaps(report: &CertificationReport) -> Vec<&QuantityFit> {
    report
        .fits
        .iter()
        .filter(|f| f.quantity.starts_with("surrogate"))
        .collect()
}

/// `epsilon_n` at a single `n`, with the maximising dictionary entry.
pub fn estimate_epsilon(
    spec: &ModelSpec,
    policy: &Arc<FeedbackPolicy>,
    mu_hat: &MeasureFlow,
    dictionary: &DeviationDictionary,
    n: usize,
    cfg: &CertifyConfig,
) -> Result<(Estimate, String)> {
    let ctx = Context {
        spec,
        policy: policy.clone(),
        mu_hat,
        tables: mu_hat.measures().par_iter().map(QuantileTable::new).collect(),
        dictionary,
    };
    let r = run_rung(&ctx, n, cfg)?;
    Ok((r.epsilon, r.epsilon_argmax))
}

pub(crate) fn fit_or_none(n: &[f64], y: &[f64]) -> Option<RateFit> {
    fit_rate_guarded(n, y).ok()
}
