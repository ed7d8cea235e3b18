//! The interacting n-player system: strategies, profiles, simulation and
//! cost estimation.

mod engine;
mod moments;

pub use engine::{
    estimate_cost, replication_inputs, run_system, simulate_system, CostEstimate, MeasureSource, RunOptions,
    SystemPaths, SystemRun,
};
pub use moments::{moment_bound_check, MomentReport, MomentRow, ProfileFamily};

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::rng::{stream, Purpose, StreamKey};
use crate::sde::{ActionSpace, TimeGrid};
use crate::solver::FeedbackPolicy;

/// An admissible control for one player.
///
/// Every kind is evaluated at the start of a step from information available
/// at that time: the step index, the player's own state and the current
/// empirical measure.
#[derive(Clone, Debug)]
pub enum Strategy {
    /// `gamma(t_k, X_{t_k})`.
    Feedback(Arc<FeedbackPolicy>),
    /// Deterministic action per step.
    OpenLoop(Arc<Vec<f64>>),
    Constant(f64),
    /// `gamma(t_k, X_{t_k} - (mean(mu_k) - reference_means[k]))`: the policy
    /// applied after re-centring the state on the reference mean.
    Recentred {
        policy: Arc<FeedbackPolicy>,
        reference_means: Arc<Vec<f64>>,
    },
}

impl Strategy {
    pub fn feedback(policy: FeedbackPolicy) -> Self {
        Strategy::Feedback(Arc::new(policy))
    }

    pub fn open_loop(actions: Vec<f64>) -> Self {
        Strategy::OpenLoop(Arc::new(actions))
    }

    /// Open-loop control that plays `first` before `switch_time` and `second` after.
    pub fn bang_bang(grid: &TimeGrid, switch_time: f64, first: f64, second: f64) -> Self {
        let path = (0..grid.steps())
            .map(|k| if grid.node(k) < switch_time { first } else { second })
            .collect();
        Strategy::open_loop(path)
    }

    /// Open-loop control with i.i.d. uniform actions per step, drawn from
    /// the stream `(seed, tag, player)`.
    pub fn random_open_loop(grid: &TimeGrid, actions: &ActionSpace, seed: u64, tag: u64, player: u64) -> Self {
        let mut rng = stream(seed, StreamKey::new(Purpose::OpenLoop, tag, 0, player));
        let path = (0..grid.steps())
            .map(|_| actions.lower() + (actions.upper() - actions.lower()) * rng.random::<f64>())
            .collect();
        Strategy::open_loop(path)
    }

    /// Raw action at step `k`; the caller clamps.
    #[inline]
    pub fn action(&self, k: usize, x: f64, mu: &EmpiricalMeasure) -> f64 {
        match self {
            Strategy::Feedback(p) => p.at_step(k, x),
            Strategy::OpenLoop(path) => path[k.min(path.len() - 1)],
            Strategy::Constant(a) => *a,
            Strategy::Recentred {
                policy,
                reference_means,
            } => {
                let shift = mu.mean() - reference_means[k.min(reference_means.len() - 1)];
                policy.at_step(k, x - shift)
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Strategy::Feedback(_) => "feedback",
            Strategy::OpenLoop(_) => "open-loop",
            Strategy::Constant(_) => "constant",
            Strategy::Recentred { .. } => "recentred",
        }
    }

    /// True when both are the same object (shared table or equal scalar).
    pub fn same_object(&self, other: &Strategy) -> bool {
        match (self, other) {
            (Strategy::Feedback(a), Strategy::Feedback(b)) => Arc::ptr_eq(a, b),
            (Strategy::OpenLoop(a), Strategy::OpenLoop(b)) => Arc::ptr_eq(a, b),
            (Strategy::Constant(a), Strategy::Constant(b)) => a.to_bits() == b.to_bits(),
            (
                Strategy::Recentred {
                    policy: a,
                    reference_means: ma,
                },
                Strategy::Recentred {
                    policy: b,
                    reference_means: mb,
                },
            ) => Arc::ptr_eq(a, b) && Arc::ptr_eq(ma, mb),
            _ => false,
        }
    }
}

/// One strategy per player.
#[derive(Clone, Debug)]
pub struct StrategyProfile {
    slots: Vec<Strategy>,
}

impl StrategyProfile {
    pub fn new(slots: Vec<Strategy>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidArgument("a profile needs at least one player".into()));
        }
        Ok(Self { slots })
    }

    /// `n` copies of `s`, sharing any table behind it.
    pub fn uniform(s: Strategy, n: usize) -> Result<Self> {
        Self::new(vec![s; n])
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, i: usize) -> &Strategy {
        &self.slots[i]
    }

    pub fn slots(&self) -> &[Strategy] {
        &self.slots
    }

    /// `(eta, gamma_{-i})`: a copy with slot `i` replaced.
    pub fn deviate(&self, i: usize, eta: Strategy) -> Result<Self> {
        if i >= self.slots.len() {
            return Err(Error::InvalidArgument(format!(
                "player {i} out of range for a profile of {}",
                self.slots.len()
            )));
        }
        let mut slots = self.slots.clone();
        slots[i] = eta;
        Ok(Self { slots })
    }
}
