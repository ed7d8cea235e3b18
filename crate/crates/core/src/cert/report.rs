use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{fit_or_none, CertifyConfig, DeviationDictionary};
use crate::error::Result;
use crate::game::CostEstimate;
use crate::measure::RateFit;
use crate::sde::ModelSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Costs of one dictionary entry at one rung (player 0 deviates).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryCosts {
    pub label: String,
    pub kind: String,
    pub extreme: bool,
    /// In the n-player system.
    pub j_hat: CostEstimate,
    /// Same paths, coefficients of the cost evaluated on the reference flow.
    pub j_surrogate: CostEstimate,
    /// Lone deviator against the reference flow.
    pub j_limit: CostEstimate,
    /// Candidate cost minus deviation cost, paired by replication.
    pub gain: CostEstimate,
    pub model_gap: CostEstimate,
    pub limit_gap: CostEstimate,
    pub deviation_stability: Estimate,
    pub identity_coupling: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungReport {
    pub n: usize,
    pub reps: usize,
    /// Lower bound on the Nash gap over the dictionary; bootstrap stderr.
    pub epsilon: Estimate,
    pub epsilon_argmax: String,
    /// `sup_t E[d_W(mu^n_t, mu_t)^2]`.
    pub coupling_gap: Estimate,
    /// `sup_t E|X^i_t - Y^i_t|^2`, averaged over players.
    pub state_gap: Estimate,
    /// `sup_t E[d_W(mu^n_t, mu~^n_t)^2]`, maximised over the dictionary.
    pub deviation_stability: Estimate,
    /// `sup_t E[(1/n) sum_i |X^i_t - X~^i_t|^2]`, maximised over the dictionary.
    pub identity_coupling: Estimate,
    /// `max_eta |E[J^n(eta) - J~^n(eta)]|`.
    pub surrogate_model_gap: Estimate,
    /// `max_eta |E[J~^n(eta) - J~(eta)]|`.
    pub surrogate_limit_gap: Estimate,
    /// Candidate against the reference flow.
    pub candidate_limit: CostEstimate,
    pub entries: Vec<EntryCosts>,
    pub clamped_actions: u64,
}

impl RungReport {
    pub fn quantities(&self) -> [(&'static str, Estimate); 7] {
        [
            ("epsilon", self.epsilon),
            ("coupling_gap", self.coupling_gap),
            ("state_gap", self.state_gap),
            ("deviation_stability", self.deviation_stability),
            ("identity_coupling", self.identity_coupling),
            ("surrogate_model_gap", self.surrogate_model_gap),
            ("surrogate_limit_gap", self.surrogate_limit_gap),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantityFit {
    pub quantity: String,
    pub theoretical_slope: f64,
    pub fit: Option<RateFit>,
    pub note: String,
}

/// One link of the inequality chain for a dictionary entry at the largest
/// rung: `margin >= -tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub entry: String,
    pub link: String,
    pub margin: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub schema_version: u32,
    pub model: String,
    pub moment_order: f64,
    /// `min{1/2, (q-2)/q}`.
    pub alpha: f64,
    /// `min{1/2, (q-2)/2}`, the competing reading, for reference only.
    pub alpha_alternative: f64,
    pub ladder: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub reference_atoms: usize,
    pub dictionary: Vec<String>,
    /// Epsilon is a lower bound: the supremum runs over the dictionary only.
    pub epsilon_scope: String,
    pub rungs: Vec<RungReport>,
    pub fits: Vec<QuantityFit>,
    pub chain: Vec<ChainCheck>,
    pub checks: Vec<Check>,
    pub errors: Vec<String>,
    pub passed: bool,
}

fn fit_quantity(rungs: &[RungReport], name: &str, slope: f64, get: impl Fn(&RungReport) -> f64) -> QuantityFit {
    let n: Vec<f64> = rungs.iter().map(|r| r.n as f64).collect();
    let y: Vec<f64> = rungs.iter().map(&get).collect();
    let (fit, note) = if y.iter().all(|v| *v == 0.0) {
        (None, "identically zero".to_string())
    } else if y.iter().any(|v| *v <= 0.0) {
        let (pn, py): (Vec<f64>, Vec<f64>) = n.iter().zip(&y).filter(|p| *p.1 > 0.0).unzip();
        match fit_or_none(&pn, &py) {
            Some(f) => (Some(f), "fitted on the positive rungs only".to_string()),
            None => (None, "too few positive rungs to fit".to_string()),
        }
    } else {
        match fit_or_none(&n, &y) {
            Some(f) => {
                let note = match f.excluded {
                    Some(x) => format!("rung n = {x} excluded as pre-asymptotic"),
                    None => String::new(),
                };
                (Some(f), note)
            }
            None => (None, "too few rungs to fit".to_string()),
        }
    };
    QuantityFit {
        quantity: name.to_string(),
        theoretical_slope: slope,
        fit,
        note,
    }
}

/// Slope bound check; identically zero quantities pass.
fn slope_check(name: &str, q: &QuantityFit, lo: f64, hi: f64) -> Check {
    match &q.fit {
        Some(f) => Check {
            name: name.to_string(),
            passed: f.slope >= lo && f.slope <= hi,
            detail: format!("slope {:.4} against [{lo:.4}, {hi:.4}]", f.slope),
        },
        None => Check {
            name: name.to_string(),
            passed: q.note == "identically zero",
            detail: q.note.clone(),
        },
    }
}

impl CertificationReport {
    pub(crate) fn assemble(
        spec: &ModelSpec,
        dictionary: &DeviationDictionary,
        reference_atoms: usize,
        cfg: &CertifyConfig,
        rungs: Vec<RungReport>,
        mut errors: Vec<String>,
    ) -> Self {
        let th = &cfg.thresholds;
        let q = spec.moment_order();
        let alpha = spec.alpha();
        let fits = vec![
            fit_quantity(&rungs, "epsilon", -alpha / 2.0, |r| r.epsilon.estimate),
            fit_quantity(&rungs, "coupling_gap", -alpha, |r| r.coupling_gap.estimate),
            fit_quantity(&rungs, "state_gap", -alpha, |r| r.state_gap.estimate),
            fit_quantity(&rungs, "deviation_stability", -1.0, |r| r.deviation_stability.estimate),
            fit_quantity(&rungs, "identity_coupling", -1.0, |r| r.identity_coupling.estimate),
            fit_quantity(&rungs, "surrogate_model_gap", -alpha / 2.0, |r| r.surrogate_model_gap.estimate),
            fit_quantity(&rungs, "surrogate_limit_gap", -alpha / 2.0, |r| r.surrogate_limit_gap.estimate),
        ];
        let fit = |name: &str| fits.iter().find(|f| f.quantity == name).expect("known quantity");
        let mut checks = vec![
            slope_check("coupling_gap.slope", fit("coupling_gap"), f64::NEG_INFINITY, -alpha + th.coupling_slack),
            slope_check("state_gap.slope", fit("state_gap"), f64::NEG_INFINITY, -alpha + th.coupling_slack),
            slope_check(
                "deviation_stability.slope",
                fit("deviation_stability"),
                th.deviation_slope[0],
                th.deviation_slope[1],
            ),
            slope_check(
                "surrogate_model_gap.slope",
                fit("surrogate_model_gap"),
                f64::NEG_INFINITY,
                -alpha / 2.0 + th.surrogate_slack,
            ),
            slope_check(
                "surrogate_limit_gap.slope",
                fit("surrogate_limit_gap"),
                f64::NEG_INFINITY,
                -alpha / 2.0 + th.surrogate_slack,
            ),
        ];

        let eps_fit = fit("epsilon");
        checks.push(match (&eps_fit.fit, rungs.last()) {
            (None, Some(last)) if eps_fit.note != "identically zero" => Check {
                name: "epsilon.slope".into(),
                passed: last.epsilon.estimate == 0.0,
                detail: format!("{}; last rung {}", eps_fit.note, last.epsilon.estimate),
            },
            _ => slope_check("epsilon.slope", eps_fit, f64::NEG_INFINITY, -alpha / 2.0 + th.epsilon_slack),
        });
        if eps_fit.note == "identically zero" {
            checks.push(Check {
                name: "epsilon.decay".into(),
                passed: true,
                detail: "epsilon identically zero".into(),
            });
        } else if let (Some(first), Some(last)) = (rungs.first(), rungs.last()) {
            let se = first.epsilon.stderr.hypot(last.epsilon.stderr);
            let bound = first.epsilon.estimate - th.epsilon_decay_sigmas * se;
            checks.push(Check {
                name: "epsilon.decay".into(),
                passed: last.epsilon.estimate <= bound,
                detail: format!(
                    "epsilon(n={}) = {:.6e} against epsilon(n={}) - {}*{:.3e} = {:.6e}",
                    last.n, last.epsilon.estimate, first.n, th.epsilon_decay_sigmas, se, bound
                ),
            });
        }

        let mut uniform = Check {
            name: "deviation_stability.uniformity".into(),
            passed: true,
            detail: "fewer than two extreme entries".into(),
        };
        // Per extreme entry, the constant K = n * D_n pooled over the ladder
        // as a geometric mean; zero rungs make the entry's K zero.
        if let Some(first) = rungs.first() {
            let idx: Vec<usize> = (0..first.entries.len()).filter(|&i| first.entries[i].extreme).collect();
            let ks: Vec<f64> = idx
                .iter()
                .map(|&i| {
                    let logs: Vec<f64> = rungs
                        .iter()
                        .map(|r| (r.n as f64 * r.entries[i].deviation_stability.estimate).ln())
                        .collect();
                    (logs.iter().sum::<f64>() / logs.len() as f64).exp()
                })
                .collect();
            if ks.len() >= 2 {
                let hi = ks.iter().copied().fold(0.0, f64::max);
                let lo = ks.iter().copied().fold(f64::INFINITY, f64::min);
                let ratio = if hi == 0.0 {
                    1.0
                } else if lo == 0.0 {
                    f64::INFINITY
                } else {
                    hi / lo
                };
                uniform.passed = ratio < th.uniformity_factor;
                uniform.detail = format!(
                    "max/min of n * gap over {} extreme entries is {ratio:.3} against {}",
                    ks.len(),
                    th.uniformity_factor
                );
            }
        }
        checks.push(uniform);

        let mut chain = Vec::new();
        if let Some(last) = rungs.last() {
            let eps = last.epsilon.estimate;
            let cand = &last.entries[0];
            let k = th.chain_sigmas;
            for e in &last.entries {
                let links = [
                    (
                        "J(eta) - J~(eta) + eps/2",
                        e.j_hat.mean - e.j_limit.mean + eps / 2.0,
                        e.j_hat.combined_stderr(&e.j_limit),
                    ),
                    (
                        "J~(eta) - J~(candidate)",
                        e.j_limit.mean - last.candidate_limit.mean,
                        e.j_limit.combined_stderr(&last.candidate_limit),
                    ),
                    (
                        "J~(candidate) - J(candidate) + eps/2",
                        last.candidate_limit.mean - cand.j_hat.mean + eps / 2.0,
                        last.candidate_limit.combined_stderr(&cand.j_hat),
                    ),
                ];
                for (link, margin, se) in links {
                    chain.push(ChainCheck {
                        entry: e.label.clone(),
                        link: link.to_string(),
                        margin,
                        tolerance: k * se,
                        passed: margin >= -k * se,
                    });
                }
            }
            let failed = chain.iter().filter(|c| !c.passed).count();
            checks.push(Check {
                name: "chain".into(),
                passed: failed == 0,
                detail: format!("{failed} of {} links violated at n = {}", chain.len(), last.n),
            });
        }
        if rungs.is_empty() {
            errors.push("no rung completed".into());
        }
        checks.push(Check {
            name: "sub-experiments".into(),
            passed: errors.is_empty(),
            detail: format!("{} failed", errors.len()),
        });
        let passed = checks.iter().all(|c| c.passed);
        Self {
            schema_version: SCHEMA_VERSION,
            model: spec.name().to_string(),
            moment_order: q,
            alpha,
            alpha_alternative: (0.5f64).min((q - 2.0) / 2.0),
            ladder: cfg.ladder.clone(),
            reps: cfg.reps,
            seed: cfg.seed,
            reference_atoms,
            dictionary: dictionary.labels(),
            epsilon_scope: "lower bound: maximum over the deviation dictionary".into(),
            rungs,
            fits,
            chain,
            checks,
            errors,
            passed,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn fit(&self, quantity: &str) -> Option<&QuantityFit> {
        self.fits.iter().find(|f| f.quantity == quantity)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }

    /// `n,quantity,estimate,stderr`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,quantity,estimate,stderr")?;
        for r in &self.rungs {
            for (name, e) in r.quantities() {
                writeln!(out, "{},{name},{:e},{:e}", r.n, e.estimate, e.stderr)?;
            }
        }
        Ok(())
    }

    /// `n,quantity,estimate,stderr,fitted,theoretical`; the theoretical
    /// column is the reference power law through the first rung.
    pub fn write_plot_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,quantity,estimate,stderr,fitted,theoretical")?;
        let Some(first) = self.rungs.first() else {
            return Ok(());
        };
        for f in &self.fits {
            let anchor = first
                .quantities()
                .iter()
                .find(|q| q.0 == f.quantity)
                .map(|q| q.1.estimate)
                .unwrap_or(0.0);
            for r in &self.rungs {
                let e = r.quantities().iter().find(|q| q.0 == f.quantity).map(|q| q.1).unwrap_or_default();
                let fitted = f.fit.as_ref().map(|fit| format!("{:e}", fit.predict(r.n as f64))).unwrap_or_default();
                let theory = anchor * (r.n as f64 / first.n as f64).powf(f.theoretical_slope);
                writeln!(out, "{},{},{:e},{:e},{fitted},{:e}", r.n, f.quantity, e.estimate, e.stderr, theory)?;
            }
        }
        Ok(())
    }
}
