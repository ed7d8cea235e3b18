use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;

pub type Drift = dyn Fn(f64, f64, &EmpiricalMeasure) -> f64 + Send + Sync;
pub type Volatility = dyn Fn(f64, f64) -> f64 + Send + Sync;
pub type JumpSize = dyn Fn(&EmpiricalMeasure, f64) -> f64 + Send + Sync;
pub type Intensity = dyn Fn(f64) -> f64 + Send + Sync;
pub type RunningCost = dyn Fn(f64, f64, &EmpiricalMeasure, f64) -> f64 + Send + Sync;
pub type TerminalCost = dyn Fn(f64, &EmpiricalMeasure) -> f64 + Send + Sync;

/// Compact interval of admissible actions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    lower: f64,
    upper: f64,
}

impl ActionSpace {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower > upper {
            return Err(Error::InvalidArgument(format!(
                "action space [{lower}, {upper}] is not a finite interval"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// `A_inf = max |a|` over the interval.
    pub fn sup_abs(&self) -> f64 {
        self.lower.abs().max(self.upper.abs())
    }

    pub fn contains(&self, a: f64) -> bool {
        a >= self.lower && a <= self.upper
    }

    pub fn clamp(&self, a: f64) -> f64 {
        a.clamp(self.lower, self.upper)
    }

    /// `points` equally spaced actions including both endpoints, ascending.
    pub fn grid(&self, points: usize) -> Vec<f64> {
        if points <= 1 || self.lower == self.upper {
            return vec![self.lower];
        }
        let h = (self.upper - self.lower) / (points - 1) as f64;
        (0..points)
            .map(|i| {
                if i == points - 1 {
                    self.upper
                } else {
                    self.lower + h * i as f64
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Initial law `chi` of the private states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitialLaw {
    Dirac(f64),
    Normal { mean: f64, sd: f64 },
    Uniform { lower: f64, upper: f64 },
    Mixture(Vec<MixtureComponent>),
}

impl InitialLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InitialLaw::Dirac(c) => *c,
            InitialLaw::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            InitialLaw::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            InitialLaw::Mixture(parts) => {
                let total: f64 = parts.iter().map(|c| c.weight).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = &parts[parts.len() - 1];
                for c in parts {
                    if u < c.weight {
                        pick = c;
                        break;
                    }
                    u -= c.weight;
                }
                let z: f64 = StandardNormal.sample(rng);
                pick.mean + pick.sd * z
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            InitialLaw::Dirac(c) => *c,
            InitialLaw::Normal { mean, .. } => *mean,
            InitialLaw::Uniform { lower, upper } => 0.5 * (lower + upper),
            InitialLaw::Mixture(parts) => {
                let total: f64 = parts.iter().map(|c| c.weight).sum();
                parts.iter().map(|c| c.weight * c.mean).sum::<f64>() / total
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            InitialLaw::Dirac(_) => 0.0,
            InitialLaw::Normal { sd, .. } => sd * sd,
            InitialLaw::Uniform { lower, upper } => (upper - lower).powi(2) / 12.0,
            InitialLaw::Mixture(parts) => {
                let total: f64 = parts.iter().map(|c| c.weight).sum();
                let m = self.mean();
                parts
                    .iter()
                    .map(|c| c.weight * (c.sd * c.sd + (c.mean - m).powi(2)))
                    .sum::<f64>()
                    / total
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            InitialLaw::Dirac(c) => c.is_finite(),
            InitialLaw::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && *sd >= 0.0,
            InitialLaw::Uniform { lower, upper } => {
                lower.is_finite() && upper.is_finite() && lower <= upper
            }
            InitialLaw::Mixture(parts) => {
                !parts.is_empty()
                    && parts.iter().all(|c| {
                        c.weight > 0.0 && c.mean.is_finite() && c.sd.is_finite() && c.sd >= 0.0
                    })
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("malformed initial law {self:?}")))
        }
    }
}

/// Coefficients and declared bounds of a symmetric game with controlled jumps.
///
/// Players share drift `b(t,x,mu)`, volatility `sigma(t,x)`, jump size
/// `beta(mu,a)`, intensity `lambda(t)`, running cost `f(t,x,mu,a)` and
/// terminal cost `g(x,mu)`. `lipschitz` and `sup_bound` are the declared
/// constants `L` and `M`; `validate_coefficients` checks them on probes.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    drift: Arc<Drift>,
    volatility: Arc<Volatility>,
    jump_size: Arc<JumpSize>,
    intensity: Arc<Intensity>,
    running_cost: Arc<RunningCost>,
    terminal_cost: Arc<TerminalCost>,
    lipschitz: f64,
    sup_bound: f64,
    intensity_bound: f64,
    actions: ActionSpace,
    initial: InitialLaw,
    moment_order: f64,
    measure_dependent: bool,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .field("sup_bound", &self.sup_bound)
            .field("intensity_bound", &self.intensity_bound)
            .field("actions", &self.actions)
            .field("initial", &self.initial)
            .field("moment_order", &self.moment_order)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    pub fn builder(name: impl Into<String>) -> ModelSpecBuilder {
        ModelSpecBuilder::new(name)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn drift(&self, t: f64, x: f64, mu: &EmpiricalMeasure) -> f64 {
        (self.drift)(t, x, mu)
    }

    #[inline]
    pub fn volatility(&self, t: f64, x: f64) -> f64 {
        (self.volatility)(t, x)
    }

    #[inline]
    pub fn jump_size(&self, mu: &EmpiricalMeasure, a: f64) -> f64 {
        (self.jump_size)(mu, a)
    }

    #[inline]
    pub fn intensity(&self, t: f64) -> f64 {
        (self.intensity)(t)
    }

    #[inline]
    pub fn running_cost(&self, t: f64, x: f64, mu: &EmpiricalMeasure, a: f64) -> f64 {
        (self.running_cost)(t, x, mu, a)
    }

    #[inline]
    pub fn terminal_cost(&self, x: f64, mu: &EmpiricalMeasure) -> f64 {
        (self.terminal_cost)(x, mu)
    }

    pub fn intensity_fn(&self) -> &Intensity {
        &*self.intensity
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    /// Upper bound on `lambda` used for thinning.
    pub fn intensity_bound(&self) -> f64 {
        self.intensity_bound
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn initial(&self) -> &InitialLaw {
        &self.initial
    }

    /// Declared moment order `q` of the initial law.
    pub fn moment_order(&self) -> f64 {
        self.moment_order
    }

    /// Whether any of `b`, `beta`, `f`, `g` read the measure argument.
    pub fn is_measure_dependent(&self) -> bool {
        self.measure_dependent
    }

    /// Sampling-rate exponent `alpha = min{1/2, (q-2)/q}`.
    pub fn alpha(&self) -> f64 {
        sampling_exponent(self.moment_order)
    }

    /// Copy of the model with a different terminal cost.
    pub fn with_terminal_cost<G>(&self, g: G) -> Self
    where
        G: Fn(f64, &EmpiricalMeasure) -> f64 + Send + Sync + 'static,
    {
        let mut out = self.clone();
        out.terminal_cost = Arc::new(g);
        out
    }
}

/// `min{1/2, (q-2)/q}`.
pub(crate) fn sampling_exponent(q: f64) -> f64 {
    0.5f64.min((q - 2.0) / q)
}

/// Builder for [`ModelSpec`]. Unset coefficients default to zero and the
/// initial law defaults to `delta_0`.
pub struct ModelSpecBuilder {
    spec: ModelSpec,
    intensity_bound: Option<f64>,
}

impl ModelSpecBuilder {
    fn new(name: impl Into<String>) -> Self {
        Self {
            spec: ModelSpec {
                name: name.into(),
                drift: Arc::new(|_, _, _| 0.0),
                volatility: Arc::new(|_, _| 0.0),
                jump_size: Arc::new(|_, _| 0.0),
                intensity: Arc::new(|_| 0.0),
                running_cost: Arc::new(|_, _, _, _| 0.0),
                terminal_cost: Arc::new(|_, _| 0.0),
                lipschitz: 1.0,
                sup_bound: 1.0,
                intensity_bound: 0.0,
                actions: ActionSpace { lower: -1.0, upper: 1.0 },
                initial: InitialLaw::Dirac(0.0),
                moment_order: 6.0,
                measure_dependent: true,
            },
            intensity_bound: None,
        }
    }

    pub fn drift(mut self, b: impl Fn(f64, f64, &EmpiricalMeasure) -> f64 + Send + Sync + 'static) -> Self {
        self.spec.drift = Arc::new(b);
        self
    }

    pub fn volatility(mut self, s: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.spec.volatility = Arc::new(s);
        self
    }

    pub fn jump_size(mut self, beta: impl Fn(&EmpiricalMeasure, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.spec.jump_size = Arc::new(beta);
        self
    }

    pub fn intensity(mut self, lambda: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.spec.intensity = Arc::new(lambda);
        self
    }

    pub fn running_cost(
        mut self,
        f: impl Fn(f64, f64, &EmpiricalMeasure, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.spec.running_cost = Arc::new(f);
        self
    }

    pub fn terminal_cost(mut self, g: impl Fn(f64, &EmpiricalMeasure) -> f64 + Send + Sync + 'static) -> Self {
        self.spec.terminal_cost = Arc::new(g);
        self
    }

    /// Declared Lipschitz constant `L` and sup bound `M`.
    pub fn bounds(mut self, lipschitz: f64, sup_bound: f64) -> Self {
        self.spec.lipschitz = lipschitz;
        self.spec.sup_bound = sup_bound;
        self
    }

    /// Thinning bound for `lambda`; defaults to `M`.
    pub fn intensity_bound(mut self, bound: f64) -> Self {
        self.intensity_bound = Some(bound);
        self
    }

    pub fn actions(mut self, actions: ActionSpace) -> Self {
        self.spec.actions = actions;
        self
    }

    pub fn initial(mut self, law: InitialLaw, moment_order: f64) -> Self {
        self.spec.initial = law;
        self.spec.moment_order = moment_order;
        self
    }

    pub fn measure_dependent(mut self, flag: bool) -> Self {
        self.spec.measure_dependent = flag;
        self
    }

    pub fn build(mut self) -> Result<ModelSpec> {
        let q = self.spec.moment_order;
        if !(q.is_finite() && q > 2.0) || q == 4.0 {
            return Err(Error::InvalidArgument(format!(
                "initial law moment order must satisfy q > 2 and q != 4, got {q}"
            )));
        }
        let (l, m) = (self.spec.lipschitz, self.spec.sup_bound);
        if !(l.is_finite() && l > 0.0 && m.is_finite() && m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "declared constants must be positive and finite (L = {l}, M = {m})"
            )));
        }
        self.spec.intensity_bound = self.intensity_bound.unwrap_or(m);
        let lb = self.spec.intensity_bound;
        if !(lb.is_finite() && lb >= 0.0) {
            return Err(Error::InvalidArgument(format!("intensity bound {lb} is not usable")));
        }
        self.spec.initial.validate()?;
        Ok(self.spec)
    }
}
