//! Jump-diffusion primitives: time grids, model coefficients, driving noise,
//! the explicit Euler transition and empirical checks of the declared bounds.

mod model;
mod noise;
mod validate;

pub use model::{
    ActionSpace, Drift, InitialLaw, Intensity, JumpSize, MixtureComponent, ModelSpec,
    ModelSpecBuilder, RunningCost, TerminalCost, Volatility,
};
pub(crate) use model::sampling_exponent;
pub use noise::{sample_initial, sample_noise, sample_path_noise, DrivingNoise, SeedRecord};
pub(crate) use noise::check_intensity;
pub use validate::{validate_coefficients, ProbePlan, ValidationEntry, ValidationReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

/// Uniform time grid `0 = t_0 < ... < t_K = T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `K`; the grid has `K + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_k`. The last node is exactly `T`.
    pub fn node(&self, k: usize) -> f64 {
        assert!(k <= self.steps, "node index {k} beyond grid of {} steps", self.steps);
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Index of the step containing `t`, i.e. the largest `k < K` with `t_k <= t`.
    pub fn step_of(&self, t: f64) -> usize {
        let k = (t / self.dt()).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.steps - 1)
        }
    }
}

/// One explicit Euler step of the compensated-jump SDE,
///
/// `x' = x + b(t,x,mu) dt + sigma(t,x) dW + beta(mu,a) (dN - lambda(t) dt)`,
///
/// with `mu` the measure at the start of the step (left limit).
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn euler_step(
    x: f64,
    t: f64,
    mu: &EmpiricalMeasure,
    action: f64,
    dw: f64,
    dn: u32,
    spec: &ModelSpec,
    dt: f64,
) -> f64 {
    let compensated = dn as f64 - spec.intensity(t) * dt;
    x + spec.drift(t, x, mu) * dt + spec.volatility(t, x) * dw + spec.jump_size(mu, action) * compensated
}
