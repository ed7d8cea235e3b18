use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StrategyProfile;
use crate::error::{Error, Result};
use crate::measure::{EmpiricalMeasure, MeasureFlow};
use crate::sde::{euler_step, sample_initial, sample_noise, DrivingNoise, ModelSpec, SeedRecord, TimeGrid};

/// Which measure enters the coefficients at each step.
#[derive(Clone, Copy, Debug)]
pub enum MeasureSource<'a> {
    /// The system's own empirical measure `mu^n_{t_k}`.
    Empirical,
    /// A fixed external flow, e.g. the mean-field solution.
    Frozen(&'a MeasureFlow),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions<'a> {
    /// Out-of-range actions become an error instead of being clamped.
    pub strict: bool,
    pub record_states: bool,
    pub record_measures: bool,
    /// Flow against which the first `surrogate_players` costs are
    /// re-evaluated along the same paths.
    pub surrogate: Option<&'a MeasureFlow>,
    pub surrogate_players: usize,
}

/// Outcome of one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemRun {
    pub players: usize,
    pub steps: usize,
    /// Step-major `(K + 1) * n` states when recorded.
    pub states: Vec<f64>,
    /// `mu^n_{t_k}` for every node when recorded (empirical source only).
    pub measures: Vec<EmpiricalMeasure>,
    /// Realised cost of every player.
    pub costs: Vec<f64>,
    pub surrogate_costs: Vec<f64>,
    /// Number of actions that had to be clamped into `A`.
    pub clamped: u64,
}

impl SystemRun {
    pub fn state(&self, player: usize, step: usize) -> f64 {
        self.states[step * self.players + player]
    }

    pub fn layer(&self, step: usize) -> &[f64] {
        &self.states[step * self.players..(step + 1) * self.players]
    }
}

/// Initial states and driving noise of replication `seed.replication` for
/// `n` players.
pub fn replication_inputs(
    spec: &ModelSpec,
    grid: &TimeGrid,
    n: usize,
    seed: SeedRecord,
) -> Result<(Vec<f64>, DrivingNoise)> {
    let xi = sample_initial(spec.initial(), n, seed);
    let noise = sample_noise(grid, spec.intensity_fn(), spec.intensity_bound(), n, seed)?;
    Ok((xi, noise))
}

/// Advances all players of `profile` in lockstep over `grid`.
///
/// At step `k` the measure is formed from the pre-step states, every player
/// then chooses its action from its own pre-step state, pays the running
/// cost by the left-endpoint rule and moves by one Euler step. Player `i`
/// uses initial state `initial[i]` and noise path `i`.
pub fn run_system(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    grid: &TimeGrid,
    initial: &[f64],
    noise: &DrivingNoise,
    source: MeasureSource<'_>,
    opts: &RunOptions<'_>,
) -> Result<SystemRun> {
    let n = profile.len();
    let steps = grid.steps();
    if initial.len() < n || noise.paths() < n || noise.steps() != steps {
        return Err(Error::InvalidArgument(format!(
            "inputs cover {} players and {} steps, need {n} and {steps}",
            initial.len().min(noise.paths()),
            noise.steps()
        )));
    }
    let frozen = match source {
        MeasureSource::Frozen(f) => Some(f),
        MeasureSource::Empirical => None,
    };
    if [frozen, opts.surrogate].iter().flatten().any(|f| f.grid().steps() != steps) {
        return Err(Error::InvalidArgument("flow and simulation grids differ".into()));
    }
    let dt = grid.dt();
    let actions = *spec.actions();
    let n_sur = if opts.surrogate.is_some() { opts.surrogate_players.min(n) } else { 0 };

    let mut x = initial[..n].to_vec();
    let mut costs = vec![0.0; n];
    let mut surrogate_costs = vec![0.0; n_sur];
    let mut states = Vec::new();
    let mut measures = Vec::new();
    let mut clamped = 0u64;
    if opts.record_states {
        states.reserve((steps + 1) * n);
    }

    for k in 0..=steps {
        let t = grid.node(k);
        let own;
        let mu = match source {
            MeasureSource::Empirical => {
                own = EmpiricalMeasure::from_unsorted(x.clone())
                    .map_err(|_| Error::Validation(format!("non-finite state at step {k}")))?;
                &own
            }
            MeasureSource::Frozen(f) => f.at(k),
        };
        if opts.record_states {
            states.extend_from_slice(&x);
        }
        if k == steps {
            for i in 0..n {
                costs[i] += spec.terminal_cost(x[i], mu);
            }
            if let Some(sf) = opts.surrogate {
                for i in 0..n_sur {
                    surrogate_costs[i] += spec.terminal_cost(x[i], sf.at(k));
                }
            }
            if opts.record_measures {
                if let MeasureSource::Empirical = source {
                    measures.push(mu.clone());
                }
            }
            break;
        }
        for i in 0..n {
            let raw = profile.get(i).action(k, x[i], mu);
            let a = if actions.contains(raw) {
                raw
            } else {
                if opts.strict {
                    return Err(Error::ActionOutOfRange {
                        action: raw,
                        lower: actions.lower(),
                        upper: actions.upper(),
                    });
                }
                clamped += 1;
                actions.clamp(raw)
            };
            costs[i] += spec.running_cost(t, x[i], mu, a) * dt;
            if i < n_sur {
                let sf = opts.surrogate.expect("surrogate flow");
                surrogate_costs[i] += spec.running_cost(t, x[i], sf.at(k), a) * dt;
            }
            x[i] = euler_step(x[i], t, mu, a, noise.dw(i, k), noise.dn(i, k), spec, dt);
        }
        if opts.record_measures {
            if let MeasureSource::Empirical = source {
                measures.push(mu.clone());
            }
        }
    }
    Ok(SystemRun {
        players: n,
        steps,
        states,
        measures,
        costs,
        surrogate_costs,
        clamped,
    })
}

/// Monte-Carlo mean with standard error `sd / sqrt(reps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
}

impl CostEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let (mean, stderr) = crate::measure::mean_stderr(values);
        Self {
            mean,
            stderr,
            reps: values.len(),
        }
    }

    /// `sqrt(se_a^2 + se_b^2)`.
    pub fn combined_stderr(&self, other: &CostEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// Paths of every replication of an n-player system.
#[derive(Clone, Debug)]
pub struct SystemPaths {
    pub players: usize,
    pub grid: TimeGrid,
    pub runs: Vec<SystemRun>,
    pub seeds: Vec<SeedRecord>,
}

impl SystemPaths {
    pub fn state(&self, rep: usize, player: usize, step: usize) -> f64 {
        self.runs[rep].state(player, step)
    }

    pub fn measure(&self, rep: usize, step: usize) -> &EmpiricalMeasure {
        &self.runs[rep].measures[step]
    }

    pub fn clamped(&self) -> u64 {
        self.runs.iter().map(|r| r.clamped).sum()
    }

    /// CSV with header `replication,player,step,state`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "replication,player,step,state")?;
        for (r, run) in self.runs.iter().enumerate() {
            for i in 0..self.players {
                for k in 0..=run.steps {
                    writeln!(out, "{r},{i},{k},{}", run.state(i, k))?;
                }
            }
        }
        Ok(())
    }
}

/// Simulates `reps` independent replications of the `n`-player system.
/// Replication `r` uses the streams `(seed, n, r)`.
pub fn simulate_system(
    spec: &ModelSpec,
    profile: &StrategyProfile,
    grid: &TimeGrid,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<SystemPaths> {
    if profile.len() != n || n == 0 {
        return Err(Error::InvalidArgument(format!("profile has {} slots for {n} players", profile.len())));
    }
    let opts = RunOptions {
        record_states: true,
        record_measures: true,
        ..Default::default()
    };
    let seeds: Vec<SeedRecord> = (0..reps).map(|r| SeedRecord::new(seed, n as u64, r as u64)).collect();
    let runs = seeds
        .par_iter()
        .map(|&s| {
            let (xi, noise) = replication_inputs(spec, grid, n, s)?;
            run_system(spec, profile, grid, &xi, &noise, MeasureSource::Empirical, &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SystemPaths {
        players: n,
        grid: grid.clone(),
        runs,
        seeds,
    })
}

/// `J^{i,n}` of `profile` by Monte Carlo over `reps` replications.
pub fn estimate_cost(
    i: usize,
    spec: &ModelSpec,
    profile: &StrategyProfile,
    grid: &TimeGrid,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<CostEstimate> {
    if i >= n || profile.len() != n {
        return Err(Error::InvalidArgument(format!("player {i} not in a game of {n}")));
    }
    let opts = RunOptions::default();
    let costs = (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = SeedRecord::new(seed, n as u64, r as u64);
            let (xi, noise) = replication_inputs(spec, grid, n, s)?;
            Ok(run_system(spec, profile, grid, &xi, &noise, MeasureSource::Empirical, &opts)?.costs[i])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CostEstimate::from_samples(&costs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Strategy;
    use crate::sde::{ActionSpace, InitialLaw};

    fn frozen(c: f64) -> ModelSpec {
        ModelSpec::builder("frozen")
            .initial(InitialLaw::Dirac(c), 6.0)
            .terminal_cost(|x, _| x * x)
            .build()
            .unwrap()
    }

    #[test]
    fn frozen_system_stays_put() {
        let spec = frozen(1.5);
        let g = TimeGrid::new(1.0, 10).unwrap();
        let p = StrategyProfile::uniform(Strategy::Constant(0.3), 7).unwrap();
        let paths = simulate_system(&spec, &p, &g, 7, 3, 1).unwrap();
        for r in 0..3 {
            for i in 0..7 {
                for k in 0..=10 {
                    assert_eq!(paths.state(r, i, k), 1.5);
                }
            }
            assert_eq!(paths.measure(r, 10).atoms(), &[1.5; 7]);
        }
    }

    #[test]
    fn cost_examples() {
        let g = TimeGrid::new(1.0, 20).unwrap();
        let zero = ModelSpec::builder("z").build().unwrap();
        let p = StrategyProfile::uniform(Strategy::Constant(0.0), 3).unwrap();
        let c = estimate_cost(0, &zero, &p, &g, 3, 10, 1).unwrap();
        assert_eq!((c.mean, c.stderr), (0.0, 0.0));
        let one = ModelSpec::builder("one").running_cost(|_, _, _, _| 1.0).build().unwrap();
        let c = estimate_cost(1, &one, &p, &g, 3, 10, 1).unwrap();
        assert!((c.mean - 1.0).abs() < 1e-12);
        let c = estimate_cost(2, &frozen(2.0), &p, &g, 3, 10, 1).unwrap();
        assert_eq!(c.mean, 4.0);
    }

    #[test]
    fn single_player_sees_own_dirac() {
        let spec = ModelSpec::builder("self")
            .drift(|_, x, mu| mu.mean() - x + 1.0)
            .initial(InitialLaw::Normal { mean: 0.0, sd: 1.0 }, 6.0)
            .volatility(|_, _| 0.5)
            .bounds(2.0, 10.0)
            .build()
            .unwrap();
        let g = TimeGrid::new(1.0, 10).unwrap();
        let p = StrategyProfile::uniform(Strategy::Constant(0.0), 1).unwrap();
        let paths = simulate_system(&spec, &p, &g, 1, 2, 3).unwrap();
        for k in 0..=10 {
            assert_eq!(paths.measure(0, k).atoms(), &[paths.state(0, 0, k)]);
        }
        // drift is exactly +1 for a lone player
        let s = paths.seeds[0];
        let (xi, noise) = replication_inputs(&spec, &g, 1, s).unwrap();
        let mut x = xi[0];
        for k in 0..10 {
            x += 0.1 + 0.5 * noise.dw(0, k);
        }
        assert!((x - paths.state(0, 0, 10)).abs() < 1e-12);
    }

    #[test]
    fn clamping_and_strict_mode() {
        let spec = ModelSpec::builder("c").actions(ActionSpace::new(-1.0, 1.0).unwrap()).build().unwrap();
        let g = TimeGrid::new(1.0, 5).unwrap();
        let p = StrategyProfile::uniform(Strategy::Constant(2.0), 2).unwrap();
        let (xi, noise) = replication_inputs(&spec, &g, 2, SeedRecord::new(1, 2, 0)).unwrap();
        let run = run_system(&spec, &p, &g, &xi, &noise, MeasureSource::Empirical, &RunOptions::default()).unwrap();
        assert_eq!(run.clamped, 10);
        let strict = RunOptions {
            strict: true,
            ..Default::default()
        };
        let err = run_system(&spec, &p, &g, &xi, &noise, MeasureSource::Empirical, &strict);
        assert!(matches!(err, Err(Error::ActionOutOfRange { .. })));
    }
}
