//! Built-in model library.
//!
//! Every entry takes named real parameters; unknown names are rejected.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sde::{ActionSpace, InitialLaw, MixtureComponent, ModelSpec};

#[derive(Clone, Debug, Serialize)]
pub struct ModelInfo {
    pub name: &'static str,
    pub summary: &'static str,
    /// Parameter names with their defaults.
    pub params: Vec<(&'static str, f64)>,
}

/// Names and defaults of every built-in model.
pub fn catalogue() -> Vec<ModelInfo> {
    vec![
        ModelInfo {
            name: "frozen",
            summary: "no dynamics; every player starts and stays at c",
            params: vec![("c", 1.0)],
        },
        ModelInfo {
            name: "decoupled",
            summary: "mean-reverting jump diffusion whose coefficients ignore the population",
            params: vec![("kappa", 0.5), ("sigma", 0.4), ("lambda", 1.0), ("jump_scale", 0.5), ("x0_sd", 0.5)],
        },
        ModelInfo {
            name: "ou-nojump",
            summary: "Ornstein-Uhlenbeck state, control only through a cost that tracks the population mean",
            params: vec![("kappa", 1.0), ("sigma", 1.0), ("x0_sd", 1.0)],
        },
        ModelInfo {
            name: "lq-riccati",
            summary: "linear-quadratic diffusion with a closed-form Riccati value function",
            params: vec![("kappa", 1.0), ("sigma", 0.5), ("x0_sd", 0.5)],
        },
        ModelInfo {
            name: "toy-interbank",
            summary: "stylised interbank lending: reversion to the mean reserve plus controlled borrowing shocks",
            params: vec![
                ("sigma", 0.4),
                ("lambda0", 1.0),
                ("lambda1", 0.5),
                ("jump_scale", 0.3),
                ("track", 1.0),
                ("herd", 0.3),
            ],
        },
    ]
}

/// Builds model `name` with `overrides` applied over the defaults.
pub fn build(name: &str, overrides: &BTreeMap<String, f64>) -> Result<ModelSpec> {
    let info = catalogue()
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::Config(format!("unknown model '{name}'")))?;
    let mut p: BTreeMap<&str, f64> = info.params.iter().copied().collect();
    for (k, v) in overrides {
        match p.get_mut(k.as_str()) {
            Some(slot) if v.is_finite() => *slot = *v,
            Some(_) => return Err(Error::Config(format!("parameter {name}.{k} must be finite"))),
            None => return Err(Error::Config(format!("model '{name}' has no parameter '{k}'"))),
        }
    }
    let get = |k: &str| p[k];
    let spec = match name {
        "frozen" => frozen(get("c")),
        "decoupled" => decoupled(get("kappa"), get("sigma"), get("lambda"), get("jump_scale"), get("x0_sd")),
        "ou-nojump" => ou_nojump(get("kappa"), get("sigma"), get("x0_sd")),
        "lq-riccati" => lq_riccati(get("kappa"), get("sigma"), get("x0_sd")),
        "toy-interbank" => toy_interbank(
            get("sigma"),
            get("lambda0"),
            get("lambda1"),
            get("jump_scale"),
            get("track"),
            get("herd"),
        ),
        _ => unreachable!(),
    };
    spec.map_err(|e| Error::Config(format!("model '{name}': {e}")))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")))
    }
}

fn unit_actions() -> ActionSpace {
    ActionSpace::new(-1.0, 1.0).expect("unit interval")
}

pub fn frozen(c: f64) -> Result<ModelSpec> {
    ModelSpec::builder("frozen")
        .running_cost(|_, x, mu, a| 0.5 * a * a + 0.5 * (x - mu.mean()).powi(2))
        .terminal_cost(|x, mu| 0.5 * (x - mu.mean()).powi(2))
        .initial(InitialLaw::Dirac(c), 6.0)
        .bounds(4.0, 1.0)
        .intensity_bound(0.0)
        .actions(unit_actions())
        .build()
}

pub fn decoupled(kappa: f64, sigma: f64, lambda: f64, jump_scale: f64, x0_sd: f64) -> Result<ModelSpec> {
    let (kappa, sigma, lambda) = (positive("kappa", kappa)?, positive("sigma", sigma)?, positive("lambda", lambda)?);
    let sup = 3.0 * kappa + sigma + jump_scale.abs() + lambda;
    ModelSpec::builder("decoupled")
        .drift(move |_, x, _| -kappa * x)
        .volatility(move |_, _| sigma)
        .jump_size(move |_, a| jump_scale * a)
        .intensity(move |_| lambda)
        .running_cost(|_, x, _, a| 0.5 * a * a + 0.5 * x * x)
        .terminal_cost(|x, _| 0.5 * x * x)
        .bounds(kappa.max(jump_scale.abs()).max(4.0), sup.max(1e-9))
        .intensity_bound(lambda)
        .actions(unit_actions())
        .initial(InitialLaw::Normal { mean: 0.0, sd: x0_sd.abs() }, 6.0)
        .measure_dependent(false)
        .build()
}

pub fn ou_nojump(kappa: f64, sigma: f64, x0_sd: f64) -> Result<ModelSpec> {
    let (kappa, sigma) = (positive("kappa", kappa)?, positive("sigma", sigma)?);
    ModelSpec::builder("ou-nojump")
        .drift(move |_, x, _| -kappa * x)
        .volatility(move |_, _| sigma)
        .running_cost(|_, x, mu, a| 0.5 * (a - (mu.mean() - x).tanh()).powi(2) + 0.5 * (x - mu.mean()).powi(2))
        .terminal_cost(|x, mu| 0.5 * (x - mu.mean()).powi(2))
        .bounds(kappa.max(8.0), (3.0 * kappa + sigma).max(1e-9))
        .intensity_bound(0.0)
        .actions(unit_actions())
        .initial(InitialLaw::Normal { mean: 0.0, sd: x0_sd.abs() }, 6.0)
        .measure_dependent(false)
        .build()
}

pub fn lq_riccati(kappa: f64, sigma: f64, x0_sd: f64) -> Result<ModelSpec> {
    let (kappa, sigma) = (positive("kappa", kappa)?, positive("sigma", sigma)?);
    ModelSpec::builder("lq-riccati")
        .drift(move |_, x, _| -kappa * x)
        .volatility(move |_, _| sigma)
        .running_cost(|_, x, _, a| 0.5 * a * a + 0.5 * x * x)
        .terminal_cost(|x, _| 0.5 * x * x)
        .bounds(kappa.max(3.0), (3.0 * kappa + sigma).max(1e-9))
        .intensity_bound(0.0)
        .actions(unit_actions())
        .initial(InitialLaw::Normal { mean: 0.0, sd: x0_sd.abs() }, 6.0)
        .measure_dependent(false)
        .build()
}

/// Value of the `lq-riccati` model at `(0, x)`: `P(0) x^2 / 2 + r(0)` with
/// `P' = 2 kappa P - 1`, `P(T) = 1`, `r' = -sigma^2 P / 2`, `r(T) = 0`,
/// integrated backwards by RK4 on `steps` steps.
pub fn lq_value_at_zero(kappa: f64, sigma: f64, horizon: f64, steps: usize) -> impl Fn(f64) -> f64 {
    let h = horizon / steps as f64;
    let rhs = |p: f64| (2.0 * kappa * p - 1.0, -0.5 * sigma * sigma * p);
    let (mut p, mut r) = (1.0f64, 0.0f64);
    for _ in 0..steps {
        // backwards: y(t - h) = y(t) - h y'
        let (k1p, k1r) = rhs(p);
        let (k2p, k2r) = rhs(p - 0.5 * h * k1p);
        let (k3p, k3r) = rhs(p - 0.5 * h * k2p);
        let (k4p, k4r) = rhs(p - h * k3p);
        p -= h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        r -= h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
    }
    move |x| 0.5 * p * x * x + r
}

/// Reserves revert to the population mean, borrowing shocks of size `a`
/// arrive at rate `lambda0 + lambda1 sin(pi t)`, and the cost charges the
/// distance of the action from the gap to the mean.
pub fn toy_interbank(
    sigma: f64,
    lambda0: f64,
    lambda1: f64,
    jump_scale: f64,
    track: f64,
    herd: f64,
) -> Result<ModelSpec> {
    let sigma = positive("sigma", sigma)?;
    if lambda0 < lambda1.abs() {
        return Err(Error::InvalidArgument("intensity lambda0 + lambda1 sin(pi t) must stay nonnegative".into()));
    }
    let bound = lambda0 + lambda1.abs();
    let (track, herd) = (positive("track", track)?, positive("herd", herd)?);
    let sup = 1.0 + sigma + jump_scale.abs() + bound;
    ModelSpec::builder("toy-interbank")
        .drift(|_, x, mu| (mu.mean() - x).tanh())
        .volatility(move |_, _| sigma)
        .jump_size(move |_, a| jump_scale * a)
        .intensity(move |t| lambda0 + lambda1 * (PI * t).sin())
        .running_cost(move |_, x, mu, a| {
            let gap = mu.mean() - x;
            0.5 * track * (a - gap).powi(2) + 0.5 * herd * gap * gap
        })
        .terminal_cost(move |x, mu| 0.5 * herd * (x - mu.mean()).powi(2))
        .bounds(8.0 * (track + herd).max(1.0), sup)
        .intensity_bound(bound)
        .actions(unit_actions())
        .initial(
            InitialLaw::Mixture(vec![
                MixtureComponent {
                    weight: 0.6,
                    mean: -0.4,
                    sd: 0.3,
                },
                MixtureComponent {
                    weight: 0.4,
                    mean: 0.8,
                    sd: 0.5,
                },
            ]),
            6.0,
        )
        .build()
}
