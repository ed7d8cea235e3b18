#![allow(dead_code)]

use std::sync::Arc;

use mfg_nash::config::ExperimentConfig;
use mfg_nash::measure::MeasureFlow;
use mfg_nash::pipeline::INITIAL_FLOW_CONTEXT;
use mfg_nash::sde::{ModelSpec, SeedRecord};
use mfg_nash::solver::{initial_flow, picard_iterate, FeedbackPolicy, FixedPointReport};

/// Squared order-2 transport cost between two uniform atom sets of equal
/// size, minimised over all permutations (Heap's algorithm).
pub fn brute_force_w2_squared(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| a.iter().zip(p).map(|(x, &j)| (x - b[j]).powi(2)).sum::<f64>() / n as f64;
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian
/// method with potentials).
pub fn hungarian(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

/// Squared order-2 distance between uniform atom sets of any sizes: both are
/// blown up to `lcm(n, m)` equally weighted atoms and matched optimally.
pub fn assignment_w2_squared(a: &[f64], b: &[f64]) -> f64 {
    let l = a.len() / gcd(a.len(), b.len()) * b.len();
    let blow = |s: &[f64]| -> Vec<f64> { s.iter().flat_map(|&x| std::iter::repeat_n(x, l / s.len())).collect() };
    let (xa, xb) = (blow(a), blow(b));
    let cost: Vec<Vec<f64>> = xa.iter().map(|x| xb.iter().map(|y| (x - y).powi(2)).collect()).collect();
    hungarian(&cost) / l as f64
}

pub struct Solved {
    pub spec: ModelSpec,
    pub policy: Arc<FeedbackPolicy>,
    pub flow: MeasureFlow,
    pub report: FixedPointReport,
    pub config: ExperimentConfig,
}

/// Solves `cfg` in memory.
pub fn solve(cfg: &ExperimentConfig) -> Solved {
    let setup = cfg.resolve().expect("valid configuration");
    let picard = cfg.picard();
    let init = initial_flow(
        &setup.spec,
        &setup.grid,
        picard.particles,
        SeedRecord::new(cfg.seeds.master, INITIAL_FLOW_CONTEXT, 0),
    )
    .unwrap();
    let (policy, flow, report) = picard_iterate(&setup.spec, &init, &setup.space, &picard).unwrap();
    Solved {
        spec: setup.spec,
        policy: Arc::new(policy),
        flow,
        report,
        config: cfg.clone(),
    }
}

/// A coarse toy-interbank problem that solves in well under a second.
pub fn small_toy() -> ExperimentConfig {
    let mut c = ExperimentConfig::for_model("toy-interbank");
    c.grid.steps = 20;
    c.grid.space_nodes = 161;
    c.grid.action_points = 17;
    c.solver.particles = 2000;
    c.ladder.n = vec![10, 20, 40];
    c.ladder.reps = 40;
    c.certify.bootstrap = 50;
    c.certify.reference_factor = 0;
    c.dictionary.fine_action_points = 33;
    c
}

pub fn small(model: &str) -> ExperimentConfig {
    let mut c = small_toy();
    c.model.name = model.to_string();
    if model == "decoupled" {
        c.grid.steps = 100;
        c.grid.space_lower = Some(-5.0);
        c.grid.space_upper = Some(5.0);
        c.grid.space_nodes = 101;
    }
    c
}
