use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Strategy;
use crate::measure::MeasureFlow;
use crate::sde::ModelSpec;
use crate::solver::{solve_hjb, FeedbackPolicy};

/// Which deviations to test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySpec {
    /// Action resolution of the recomputed best response; 0 disables it.
    pub fine_action_points: usize,
    /// Number of constant actions, evenly spaced over `A`.
    pub constant_points: usize,
    /// Switch times as fractions of the horizon; each gives two bang-bang
    /// entries (lower then upper, upper then lower).
    pub switch_fractions: Vec<f64>,
    /// Shifts added to the candidate policy.
    pub shifts: Vec<f64>,
    /// Include versions of the candidate and of the fine best response that
    /// re-centre the state on the observed empirical mean.
    pub recentred: bool,
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self {
            fine_action_points: 257,
            constant_points: 5,
            switch_fractions: vec![0.5],
            shifts: vec![0.1, -0.1],
            recentred: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DictionaryEntry {
    pub label: String,
    pub strategy: Strategy,
    /// Plays only endpoints of `A`; used for the uniformity check.
    pub extreme: bool,
}

impl DictionaryEntry {
    pub fn new(label: impl Into<String>, strategy: Strategy) -> Self {
        Self {
            label: label.into(),
            strategy,
            extreme: false,
        }
    }
}

/// Finite set of unilateral deviations for player 0. Entry 0 is always the
/// candidate policy itself.
#[derive(Clone, Debug)]
pub struct DeviationDictionary {
    entries: Vec<DictionaryEntry>,
}

impl DeviationDictionary {
    /// Dictionary holding only the candidate.
    pub fn candidate_only(policy: &Arc<FeedbackPolicy>) -> Self {
        Self {
            entries: vec![DictionaryEntry::new("candidate", Strategy::Feedback(policy.clone()))],
        }
    }

    /// `extra` entries appended after the candidate.
    pub fn with_entries(policy: &Arc<FeedbackPolicy>, extra: Vec<DictionaryEntry>) -> Self {
        let mut d = Self::candidate_only(policy);
        d.entries.extend(extra);
        d
    }

    pub fn build(spec: &ModelSpec, policy: &Arc<FeedbackPolicy>, mu_hat: &MeasureFlow, ds: &DictionarySpec) -> Result<Self> {
        let grid = mu_hat.grid();
        let actions = spec.actions();
        let mut extra = Vec::new();
        let reference_means: Arc<Vec<f64>> = Arc::new(mu_hat.measures().iter().map(|m| m.mean()).collect());
        let fine = if ds.fine_action_points > 0 {
            let sol = solve_hjb(spec, mu_hat, policy.space(), ds.fine_action_points)?;
            Some(Arc::new(sol.policy))
        } else {
            None
        };
        if let Some(f) = &fine {
            extra.push(DictionaryEntry::new(
                format!("best-response-{}", ds.fine_action_points),
                Strategy::Feedback(f.clone()),
            ));
        }
        for a in actions.grid(ds.constant_points) {
            extra.push(DictionaryEntry {
                label: format!("constant({a})"),
                strategy: Strategy::Constant(a),
                extreme: a == actions.lower() || a == actions.upper(),
            });
        }
        for &s in &ds.switch_fractions {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Config(format!("switch fraction {s} outside [0, 1]")));
            }
            let t = grid.node(((s * grid.steps() as f64).round() as usize).min(grid.steps()));
            let (lo, hi) = (actions.lower(), actions.upper());
            extra.push(DictionaryEntry {
                label: format!("bang-bang({lo}->{hi}@{t})"),
                strategy: Strategy::bang_bang(grid, t, lo, hi),
                extreme: true,
            });
            extra.push(DictionaryEntry {
                label: format!("bang-bang({hi}->{lo}@{t})"),
                strategy: Strategy::bang_bang(grid, t, hi, lo),
                extreme: true,
            });
        }
        if ds.recentred {
            extra.push(DictionaryEntry::new(
                "recentred-candidate",
                Strategy::Recentred {
                    policy: policy.clone(),
                    reference_means: reference_means.clone(),
                },
            ));
            if let Some(f) = &fine {
                extra.push(DictionaryEntry::new(
                    format!("recentred-best-response-{}", ds.fine_action_points),
                    Strategy::Recentred {
                        policy: f.clone(),
                        reference_means: reference_means.clone(),
                    },
                ));
            }
        }
        for &d in &ds.shifts {
            extra.push(DictionaryEntry::new(format!("candidate{d:+}"), Strategy::feedback(policy.shifted(d))));
        }
        Ok(Self::with_entries(policy, extra))
    }

    pub fn entries(&self) -> &[DictionaryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }

    /// Replaces entry `i`.
    pub fn replace(&mut self, i: usize, entry: DictionaryEntry) {
        self.entries[i] = entry;
    }
}
