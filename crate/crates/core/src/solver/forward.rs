use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hjb::solve_hjb;
use super::policy::{enforce_lipschitz_cap, FeedbackPolicy, PolicyVariant, SpaceGrid};
use crate::error::{Error, Result};
use crate::game::{replication_inputs, run_system, CostEstimate, MeasureSource, RunOptions, Strategy, StrategyProfile};
use crate::measure::{EmpiricalMeasure, MeasureFlow};
use crate::sde::{euler_step, sample_path_noise, ModelSpec, SeedRecord, TimeGrid};

/// Smallest particle count accepted by [`push_forward`].
pub const MIN_PARTICLES: usize = 1000;

/// Stream contexts used by the fixed-point solver.
pub const PICARD_CONTEXT: u64 = 0x5049_4341;
pub const RESIDUAL_CONTEXT: u64 = 0x5245_5349;

/// Empirical flow of `m` independent copies of the representative player
/// driven by `strategy` against the frozen `flow`.
///
/// Particle `p` uses the streams `(seed, p)`; the output is independent of
/// scheduling.
pub fn push_forward_strategy(
    spec: &ModelSpec,
    strategy: &Strategy,
    flow: &MeasureFlow,
    m: usize,
    seed: SeedRecord,
) -> Result<MeasureFlow> {
    if m < MIN_PARTICLES {
        return Err(Error::InvalidArgument(format!("push-forward needs at least {MIN_PARTICLES} particles, got {m}")));
    }
    let grid = flow.grid().clone();
    let steps = grid.steps();
    let dt = grid.dt();
    let actions = *spec.actions();
    let xi = crate::sde::sample_initial(spec.initial(), m, seed);
    crate::sde::check_intensity(&grid, spec.intensity_fn(), spec.intensity_bound())?;
    let paths: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|p| {
            let (dw, dn) = sample_path_noise(&grid, spec.intensity_fn(), spec.intensity_bound(), seed, p)?;
            let mut x = xi[p];
            let mut path = Vec::with_capacity(steps + 1);
            path.push(x);
            for k in 0..steps {
                let t = grid.node(k);
                let mu = flow.at(k);
                let a = actions.clamp(strategy.action(k, x, mu));
                x = euler_step(x, t, mu, a, dw[k], dn[k], spec, dt);
                path.push(x);
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;
    let measures = (0..=steps)
        .into_par_iter()
        .map(|k| EmpiricalMeasure::from_unsorted(paths.iter().map(|p| p[k]).collect()))
        .collect::<Result<Vec<_>>>()
        .map_err(|_| Error::Validation("push-forward produced a non-finite state".into()))?;
    MeasureFlow::new(grid, measures)
}

/// [`push_forward_strategy`] for a feedback policy.
pub fn push_forward(
    spec: &ModelSpec,
    policy: &FeedbackPolicy,
    flow: &MeasureFlow,
    m: usize,
    seed: SeedRecord,
) -> Result<MeasureFlow> {
    push_forward_strategy(spec, &Strategy::feedback(policy.clone()), flow, m, seed)
}

/// Starting flow: `m` samples of `chi` pushed forward with the action
/// closest to zero against the constant flow of the initial sample.
pub fn initial_flow(spec: &ModelSpec, grid: &TimeGrid, m: usize, seed: SeedRecord) -> Result<MeasureFlow> {
    let xi = crate::sde::sample_initial(spec.initial(), m, seed);
    let mu0 = EmpiricalMeasure::from_unsorted(xi)?;
    let frozen = MeasureFlow::constant(grid.clone(), mu0);
    let a0 = spec.actions().clamp(0.0);
    push_forward_strategy(spec, &Strategy::Constant(a0), &frozen, m, seed)
}

/// Mixes two flows node by node: `ceil(theta m)` evenly spaced order
/// statistics of `new` and the remaining count evenly spaced from `old`.
pub fn damp(old: &MeasureFlow, new: &MeasureFlow, theta: f64) -> Result<MeasureFlow> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("damping {theta} outside (0, 1]")));
    }
    if theta == 1.0 {
        return Ok(new.clone());
    }
    let m = new.atoms_per_node();
    let take_new = ((theta * m as f64).ceil() as usize).min(m);
    let take_old = m - take_new;
    let pick = |atoms: &[f64], s: usize| -> Vec<f64> {
        let len = atoms.len();
        (0..s).map(|i| atoms[((2 * i + 1) * len) / (2 * s)]).collect()
    };
    let measures = (0..=new.grid().steps())
        .map(|k| {
            let mut atoms = pick(new.at(k).atoms(), take_new);
            atoms.extend(pick(old.at(k).atoms(), take_old));
            EmpiricalMeasure::from_unsorted(atoms)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasureFlow::new(new.grid().clone(), measures)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub particles: usize,
    pub action_points: usize,
    pub lipschitz_cap: f64,
    pub seed: u64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            damping: 1.0,
            tol: 0.01,
            max_iter: 30,
            particles: 20_000,
            action_points: 65,
            lipschitz_cap: 50.0,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub iterations: usize,
    /// `sup_t d_W(mu^{(k+1)}_t, mu^{(k)}_t)` for every counted iteration.
    pub gaps: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
    /// Iteration whose iterate is returned.
    pub selected_iteration: usize,
    /// Out-of-sample `sup_t d_W(mu_t, law of Y_t)` for the returned pair.
    pub residual: f64,
    pub policy_lipschitz: f64,
    pub policy_variant: PolicyVariant,
    pub clamped_jumps: u64,
}

/// Damped Picard iteration on empirical flows.
///
/// A warm-start best response and push-forward from `init` precede the
/// counted iterations. Each iteration solves the HJB against the current
/// flow, pushes the law forward with the same particle noise, damps and
/// records the gap; it stops once the gap drops below `tol`. Without
/// convergence the iterate with the smallest gap is returned.
pub fn picard_iterate(
    spec: &ModelSpec,
    init: &MeasureFlow,
    space: &SpaceGrid,
    cfg: &PicardConfig,
) -> Result<(FeedbackPolicy, MeasureFlow, FixedPointReport)> {
    let seed = SeedRecord::new(cfg.seed, PICARD_CONTEXT, 0);
    let m = cfg.particles;
    let warm = solve_hjb(spec, init, space, cfg.action_points)?;
    let mut current = push_forward(spec, &warm.policy, init, m, seed)?;
    let mut gaps = Vec::new();
    let mut best: Option<(f64, usize, FeedbackPolicy, MeasureFlow, u64)> = None;
    let mut converged = false;
    for it in 1..=cfg.max_iter {
        let sol = solve_hjb(spec, &current, space, cfg.action_points)?;
        let pushed = push_forward(spec, &sol.policy, &current, m, seed)?;
        let next = damp(&current, &pushed, cfg.damping)?;
        let gap = next.sup_distance(&current)?;
        gaps.push(gap);
        if best.as_ref().is_none_or(|b| gap < b.0) {
            best = Some((gap, it, sol.policy.clone(), next.clone(), sol.clamped_jumps));
        }
        if gap < cfg.tol {
            converged = true;
            best = Some((gap, it, sol.policy, next.clone(), sol.clamped_jumps));
            current = next;
            break;
        }
        current = next;
    }
    let (policy, flow, selected, clamped_jumps) = match best {
        Some((_, it, p, f, c)) => (p, f, it, c),
        None => (warm.policy, current, 0, warm.clamped_jumps),
    };
    let (policy, lip) = enforce_lipschitz_cap(policy, cfg.lipschitz_cap);
    let fresh = push_forward(spec, &policy, &flow, m, SeedRecord::new(cfg.seed, RESIDUAL_CONTEXT, 0))?;
    let residual = flow.sup_distance(&fresh)?;
    let report = FixedPointReport {
        iterations: gaps.len(),
        gaps,
        converged,
        tolerance: cfg.tol,
        selected_iteration: selected,
        residual,
        policy_lipschitz: lip,
        policy_variant: policy.variant(),
        clamped_jumps,
    };
    Ok((policy, flow, report))
}

/// Cost of `strategy` for the representative player against the frozen
/// `flow`, over `reps` independent paths keyed by `(seed, 0, 0, path)`.
pub fn estimate_mfg_cost(
    spec: &ModelSpec,
    strategy: &Strategy,
    flow: &MeasureFlow,
    reps: usize,
    seed: u64,
) -> Result<CostEstimate> {
    let grid = flow.grid().clone();
    let chunk = 256;
    let chunks = reps.div_ceil(chunk);
    let costs: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = chunk.min(reps - c * chunk);
            let s = SeedRecord::new(seed, 0, c as u64);
            let (xi, noise) = replication_inputs(spec, &grid, len, s)?;
            let profile = StrategyProfile::uniform(strategy.clone(), len)?;
            let run = run_system(spec, &profile, &grid, &xi, &noise, MeasureSource::Frozen(flow), &RunOptions::default())?;
            Ok(run.costs)
        })
        .collect::<Result<_>>()?;
    let all: Vec<f64> = costs.into_iter().flatten().collect();
    Ok(CostEstimate::from_samples(&all))
}

const FLOW_MAGIC: &[u8; 8] = b"MFGFLOW1";

/// Flat little-endian binary: magic `MFGFLOW1`, `u64` steps, `f64` horizon,
/// `u64` atoms per node, then `(K + 1) * m` sorted atoms node by node.
pub fn write_flow_binary<W: Write>(flow: &MeasureFlow, mut out: W) -> Result<()> {
    out.write_all(FLOW_MAGIC)?;
    out.write_all(&(flow.grid().steps() as u64).to_le_bytes())?;
    out.write_all(&flow.grid().horizon().to_le_bytes())?;
    out.write_all(&(flow.atoms_per_node() as u64).to_le_bytes())?;
    for mu in flow.measures() {
        for x in mu.atoms() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_flow_binary<R: Read>(mut input: R) -> Result<MeasureFlow> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != FLOW_MAGIC {
        return Err(Error::Data("not a flow file".into()));
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let steps = u64::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let horizon = f64::from_le_bytes(word);
    input.read_exact(&mut word)?;
    let m = u64::from_le_bytes(word) as usize;
    let grid = TimeGrid::new(horizon, steps)?;
    let mut bytes = vec![0u8; (steps + 1) * m * 8];
    input.read_exact(&mut bytes)?;
    let mut measures = Vec::with_capacity(steps + 1);
    for node in bytes.chunks_exact(m * 8) {
        let atoms: Vec<f64> = node.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        measures.push(EmpiricalMeasure::from_sorted(atoms).map_err(|e| Error::Data(e.to_string()))?);
    }
    MeasureFlow::new(grid, measures)
}

/// CSV summary `k,t,mean,variance,min,max` of a flow.
pub fn write_flow_summary<W: Write>(flow: &MeasureFlow, mut out: W) -> Result<()> {
    writeln!(out, "k,t,mean,variance,min,max")?;
    for (k, mu) in flow.measures().iter().enumerate() {
        writeln!(
            out,
            "{k},{},{},{},{},{}",
            flow.grid().node(k),
            mu.mean(),
            mu.variance(),
            mu.min(),
            mu.max()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::empirical;
    use crate::sde::InitialLaw;

    #[test]
    fn damping_mixes_counts() {
        let g = TimeGrid::new(1.0, 1).unwrap();
        let old = MeasureFlow::constant(g.clone(), empirical(&[0.0; 10]).unwrap());
        let new = MeasureFlow::constant(g, empirical(&[1.0; 10]).unwrap());
        let mixed = damp(&old, &new, 0.35).unwrap();
        assert_eq!(mixed.at(0).atoms().iter().filter(|&&x| x == 1.0).count(), 4);
        assert_eq!(damp(&old, &new, 1.0).unwrap(), new);
        assert!(damp(&old, &new, 0.0).is_err());
    }

    #[test]
    fn flow_binary_round_trip() {
        let spec = ModelSpec::builder("n")
            .initial(InitialLaw::Normal { mean: 0.0, sd: 1.0 }, 6.0)
            .volatility(|_, _| 0.3)
            .build()
            .unwrap();
        let g = TimeGrid::new(1.0, 3).unwrap();
        let f = initial_flow(&spec, &g, 1000, SeedRecord::new(3, 0, 0)).unwrap();
        let mut buf = Vec::new();
        write_flow_binary(&f, &mut buf).unwrap();
        assert_eq!(read_flow_binary(buf.as_slice()).unwrap(), f);
        assert!(read_flow_binary(&b"garbage!"[..]).is_err());
    }

    #[test]
    fn too_few_particles() {
        let spec = ModelSpec::builder("n").build().unwrap();
        let g = TimeGrid::new(1.0, 3).unwrap();
        assert!(initial_flow(&spec, &g, 10, SeedRecord::new(3, 0, 0)).is_err());
    }
}
