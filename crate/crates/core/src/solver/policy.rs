use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, StreamKey};
use crate::sde::{ActionSpace, InitialLaw, ModelSpec, TimeGrid};

/// Uniform space lattice `x_0 < ... < x_{J-1}` on a truncation box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    lower: f64,
    upper: f64,
    nodes: usize,
}

impl SpaceGrid {
    pub fn new(lower: f64, upper: f64, nodes: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) || nodes < 2 {
            return Err(Error::InvalidArgument(format!(
                "space grid [{lower}, {upper}] with {nodes} nodes is not usable"
            )));
        }
        Ok(Self { lower, upper, nodes })
    }

    /// Box from the 0.1% and 99.9% quantiles of `chi`, padded on both sides
    /// by `6 (M T + A_inf)`.
    pub fn for_model(spec: &ModelSpec, horizon: f64, nodes: usize) -> Result<Self> {
        let (lo, hi) = initial_quantiles(spec.initial());
        let pad = 6.0 * (spec.sup_bound() * horizon + spec.actions().sup_abs());
        Self::new(lo - pad, hi + pad, nodes)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.nodes
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.upper - self.lower) / (self.nodes - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.nodes - 1 {
            self.upper
        } else {
            self.lower + self.dx() * j as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.nodes).map(|j| self.node(j)).collect()
    }

    /// Cell index and weight of the right node for `x`, clamped to the box.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = (x - self.lower) / self.dx();
        if !(s > 0.0) {
            return (0, 0.0);
        }
        let last = (self.nodes - 2) as f64;
        if s >= last + 1.0 {
            return (self.nodes - 2, 1.0);
        }
        let j = s.floor().min(last);
        (j as usize, s - j)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

fn initial_quantiles(law: &InitialLaw) -> (f64, f64) {
    match law {
        InitialLaw::Dirac(c) => (*c, *c),
        InitialLaw::Uniform { lower, upper } => (*lower, *upper),
        _ => {
            let mut rng = stream(0, StreamKey::new(Purpose::Probe, 0, 0, 0));
            let mut xs: Vec<f64> = (0..200_000).map(|_| law.sample(&mut rng)).collect();
            xs.sort_unstable_by(f64::total_cmp);
            let lo = xs[(0.001 * xs.len() as f64) as usize];
            let hi = xs[(0.999 * xs.len() as f64) as usize];
            (lo, hi)
        }
    }
}

/// Value function on the `(t_k, x_j)` lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueGrid {
    pub(crate) time: TimeGrid,
    pub(crate) space: SpaceGrid,
    pub(crate) values: Vec<f64>,
}

impl ValueGrid {
    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn space(&self) -> &SpaceGrid {
        &self.space
    }

    pub fn layer(&self, k: usize) -> &[f64] {
        let j = self.space.len();
        &self.values[k * j..(k + 1) * j]
    }

    /// Linear interpolation in `x` on layer `k`.
    pub fn value_at(&self, k: usize, x: f64) -> f64 {
        let layer = self.layer(k);
        let (j, s) = self.space.locate(x);
        (1.0 - s) * layer[j] + s * layer[j + 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyVariant {
    Raw,
    /// One pass of 3-node moving average in `x` was applied.
    Smoothed,
}

/// Markovian feedback `gamma(t, x)` tabulated on a lattice.
///
/// Evaluation is bilinear in `(t, x)`, with `x` clamped to the space box and
/// the result clamped to the action interval.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPolicy {
    time: TimeGrid,
    space: SpaceGrid,
    table: Vec<f64>,
    actions: ActionSpace,
    variant: PolicyVariant,
}

impl FeedbackPolicy {
    /// `table` is time-major with `K + 1` layers of `J` entries.
    pub fn new(time: TimeGrid, space: SpaceGrid, table: Vec<f64>, actions: ActionSpace) -> Result<Self> {
        if table.len() != (time.steps() + 1) * space.len() {
            return Err(Error::InvalidArgument(format!(
                "policy table has {} entries, lattice needs {}",
                table.len(),
                (time.steps() + 1) * space.len()
            )));
        }
        if let Some(a) = table.iter().find(|a| !actions.contains(**a)) {
            return Err(Error::ActionOutOfRange {
                action: *a,
                lower: actions.lower(),
                upper: actions.upper(),
            });
        }
        Ok(Self {
            time,
            space,
            table,
            actions,
            variant: PolicyVariant::Raw,
        })
    }

    /// Policy that always plays `a`.
    pub fn constant(time: TimeGrid, space: SpaceGrid, a: f64, actions: ActionSpace) -> Result<Self> {
        let len = (time.steps() + 1) * space.len();
        Self::new(time, space, vec![a; len], actions)
    }

    /// Tabulates `h(t_k, x_j)` clamped to the action interval.
    pub fn from_fn(time: TimeGrid, space: SpaceGrid, actions: ActionSpace, h: impl Fn(f64, f64) -> f64) -> Self {
        let mut table = Vec::with_capacity((time.steps() + 1) * space.len());
        for k in 0..=time.steps() {
            let t = time.node(k);
            for j in 0..space.len() {
                table.push(actions.clamp(h(t, space.node(j))));
            }
        }
        Self {
            time,
            space,
            table,
            actions,
            variant: PolicyVariant::Raw,
        }
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn space(&self) -> &SpaceGrid {
        &self.space
    }

    pub fn actions(&self) -> &ActionSpace {
        &self.actions
    }

    pub fn variant(&self) -> PolicyVariant {
        self.variant
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn layer(&self, k: usize) -> &[f64] {
        let j = self.space.len();
        &self.table[k * j..(k + 1) * j]
    }

    /// Action at grid time `t_k` and state `x`.
    #[inline]
    pub fn at_step(&self, k: usize, x: f64) -> f64 {
        let jn = self.space.len();
        let (j, s) = self.space.locate(x);
        let base = k.min(self.time.steps()) * jn + j;
        let a = (1.0 - s) * self.table[base] + s * self.table[base + 1];
        self.actions.clamp(a)
    }

    pub fn evaluate(&self, t: f64, x: f64) -> f64 {
        let steps = self.time.steps();
        let ft = (t / self.time.dt()).clamp(0.0, steps as f64);
        let k = (ft.floor() as usize).min(steps);
        let w = ft - k as f64;
        if k == steps || w == 0.0 {
            return self.at_step(k, x);
        }
        let a = (1.0 - w) * self.at_step(k, x) + w * self.at_step(k + 1, x);
        self.actions.clamp(a)
    }

    /// Copy with `delta` added to every entry (then clamped).
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for a in &mut out.table {
            *a = self.actions.clamp(*a + delta);
        }
        out
    }

    /// Copy with `amplitude * sin(2 pi x / period)` added (then clamped).
    pub fn with_oscillation(&self, amplitude: f64, period: f64) -> Self {
        let mut out = self.clone();
        let jn = self.space.len();
        for (idx, a) in out.table.iter_mut().enumerate() {
            let x = self.space.node(idx % jn);
            *a = self.actions.clamp(*a + amplitude * (std::f64::consts::TAU * x / period).sin());
        }
        out
    }

    /// One pass of 3-node moving average in `x` on every layer. End nodes
    /// average with their single neighbour.
    pub fn smoothed(&self) -> Self {
        let jn = self.space.len();
        let mut out = self.clone();
        for k in 0..=self.time.steps() {
            let src = self.layer(k);
            let dst = &mut out.table[k * jn..(k + 1) * jn];
            for j in 0..jn {
                let lo = j.saturating_sub(1);
                let hi = (j + 1).min(jn - 1);
                let s: f64 = src[lo..=hi].iter().sum();
                dst[j] = self.actions.clamp(s / (hi - lo + 1) as f64);
            }
        }
        out.variant = PolicyVariant::Smoothed;
        out
    }

    /// CSV with header `k,t,j,x,action`, one row per lattice node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,t,j,x,action")?;
        for k in 0..=self.time.steps() {
            let t = self.time.node(k);
            for (j, a) in self.layer(k).iter().enumerate() {
                writeln!(out, "{k},{t},{j},{},{a}", self.space.node(j))?;
            }
        }
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(input: R, actions: ActionSpace) -> Result<Self> {
        let mut rows = Vec::new();
        for (line_no, line) in input.lines().enumerate() {
            let line = line?;
            if line_no == 0 {
                if line.trim() != "k,t,j,x,action" {
                    return Err(Error::Data(format!("unexpected policy header '{line}'")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Data(format!("policy row {line_no} has {} fields", f.len())));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::Data(format!("policy row {line_no}: {e}")))
            };
            let k = parse(f[0])? as usize;
            let j = parse(f[2])? as usize;
            rows.push((k, parse(f[1])?, j, parse(f[3])?, parse(f[4])?));
        }
        let steps = rows.iter().map(|r| r.0).max().ok_or_else(|| Error::Data("empty policy file".into()))?;
        let jn = rows.iter().map(|r| r.2).max().unwrap() + 1;
        if rows.len() != (steps + 1) * jn || steps == 0 {
            return Err(Error::Data("policy rows do not form a full lattice".into()));
        }
        let horizon = rows.iter().find(|r| r.0 == steps).unwrap().1;
        let lower = rows.iter().find(|r| r.2 == 0).unwrap().3;
        let upper = rows.iter().find(|r| r.2 == jn - 1).unwrap().3;
        let time = TimeGrid::new(horizon, steps)?;
        let space = SpaceGrid::new(lower, upper, jn)?;
        let mut table = vec![f64::NAN; (steps + 1) * jn];
        for (k, _, j, _, a) in rows {
            table[k * jn + j] = a;
        }
        if table.iter().any(|a| a.is_nan()) {
            return Err(Error::Data("policy lattice has holes".into()));
        }
        Self::new(time, space, table, actions)
    }
}

/// Largest adjacent-node slope `|a[k][j+1] - a[k][j]| / dx` over all layers,
/// which is the Lipschitz constant in `x` of the bilinear interpolant.
pub fn lipschitz_estimate(policy: &FeedbackPolicy) -> f64 {
    let dx = policy.space().dx();
    (0..=policy.time().steps())
        .map(|k| {
            policy
                .layer(k)
                .windows(2)
                .map(|w| (w[1] - w[0]).abs() / dx)
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Smooths once if the estimate exceeds `cap`. Returns the policy used and
/// its estimate.
pub fn enforce_lipschitz_cap(policy: FeedbackPolicy, cap: f64) -> (FeedbackPolicy, f64) {
    let l = lipschitz_estimate(&policy);
    if l <= cap {
        return (policy, l);
    }
    let smooth = policy.smoothed();
    let l = lipschitz_estimate(&smooth);
    (smooth, l)
}
