use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{InitialLaw, TimeGrid};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, StreamKey};

/// Where a block of noise came from: the master seed plus the
/// (context, replication) part of every path's stream key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub context: u64,
    pub replication: u64,
}

impl SeedRecord {
    pub fn new(master: u64, context: u64, replication: u64) -> Self {
        Self {
            master,
            context,
            replication,
        }
    }

    pub fn key(&self, purpose: Purpose, path: usize) -> StreamKey {
        StreamKey::new(purpose, self.context, self.replication, path as u64)
    }
}

/// Brownian increments and Poisson jump counts for a set of paths on one grid.
///
/// Stored path-major: entry `(p, k)` lives at `p * steps + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivingNoise {
    steps: usize,
    dw: Vec<f64>,
    dn: Vec<u32>,
    seed: SeedRecord,
}

impl DrivingNoise {
    /// Assembles noise from path-major arrays of `paths * steps` entries.
    pub fn from_parts(steps: usize, dw: Vec<f64>, dn: Vec<u32>, seed: SeedRecord) -> Result<Self> {
        if steps == 0 || dw.len() != dn.len() || dw.len() % steps != 0 {
            return Err(Error::InvalidArgument("noise arrays do not match the step count".into()));
        }
        Ok(Self { steps, dw, dn, seed })
    }

    pub fn paths(&self) -> usize {
        self.dw.len() / self.steps
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn dw(&self, path: usize, step: usize) -> f64 {
        self.dw[path * self.steps + step]
    }

    #[inline]
    pub fn dn(&self, path: usize, step: usize) -> u32 {
        self.dn[path * self.steps + step]
    }

    pub fn path_dw(&self, path: usize) -> &[f64] {
        &self.dw[path * self.steps..(path + 1) * self.steps]
    }

    pub fn path_dn(&self, path: usize) -> &[u32] {
        &self.dn[path * self.steps..(path + 1) * self.steps]
    }

    pub fn seed(&self) -> SeedRecord {
        self.seed
    }
}

/// Draws independent Brownian increments (variance `dt`) and jump counts for
/// `n_paths` paths. Jump counts come from Lewis-Shedler thinning of a rate
/// `bound` Poisson process against `lambda(t)`; multiple events inside one
/// step are aggregated.
///
/// Path `p` only reads the streams keyed by `(seed, p)`, so the result does
/// not depend on how paths are scheduled.
pub fn sample_noise(
    grid: &TimeGrid,
    intensity: &dyn Fn(f64) -> f64,
    bound: f64,
    n_paths: usize,
    seed: SeedRecord,
) -> Result<DrivingNoise> {
    check_intensity(grid, intensity, bound)?;
    let steps = grid.steps();
    let mut dw = vec![0.0; n_paths * steps];
    let mut dn = vec![0u32; n_paths * steps];
    for p in 0..n_paths {
        let range = p * steps..(p + 1) * steps;
        fill_path(grid, intensity, bound, seed, p, &mut dw[range.clone()], &mut dn[range])?;
    }
    Ok(DrivingNoise { steps, dw, dn, seed })
}

/// Noise of a single path `path`, identical to row `path` of [`sample_noise`].
pub fn sample_path_noise(
    grid: &TimeGrid,
    intensity: &dyn Fn(f64) -> f64,
    bound: f64,
    seed: SeedRecord,
    path: usize,
) -> Result<(Vec<f64>, Vec<u32>)> {
    let steps = grid.steps();
    let mut dw = vec![0.0; steps];
    let mut dn = vec![0u32; steps];
    fill_path(grid, intensity, bound, seed, path, &mut dw, &mut dn)?;
    Ok((dw, dn))
}

pub(crate) fn check_intensity(grid: &TimeGrid, intensity: &dyn Fn(f64) -> f64, bound: f64) -> Result<()> {
    if !(bound.is_finite() && bound >= 0.0) {
        return Err(Error::InvalidArgument(format!("intensity bound {bound} is not usable")));
    }
    for k in 0..=grid.steps() {
        let t = grid.node(k);
        let lam = intensity(t);
        if !(lam >= 0.0) || lam > bound * (1.0 + 1e-12) {
            return Err(Error::Validation(format!(
                "intensity lambda({t}) = {lam} outside [0, {bound}]"
            )));
        }
    }
    Ok(())
}

fn fill_path(
    grid: &TimeGrid,
    intensity: &dyn Fn(f64) -> f64,
    bound: f64,
    seed: SeedRecord,
    p: usize,
    dw: &mut [f64],
    counts: &mut [u32],
) -> Result<()> {
    let sqdt = grid.dt().sqrt();
    let horizon = grid.horizon();
    let mut rng = stream(seed.master, seed.key(Purpose::Brownian, p));
    for slot in dw.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *slot = sqdt * z;
    }
    if bound == 0.0 {
        return Ok(());
    }
    let mut rng = stream(seed.master, seed.key(Purpose::Jumps, p));
    let mut t = 0.0;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / bound;
        if t >= horizon {
            return Ok(());
        }
        let lam = intensity(t);
        if !(lam >= 0.0) || lam > bound * (1.0 + 1e-12) {
            return Err(Error::Validation(format!(
                "intensity lambda({t}) = {lam} outside [0, {bound}]"
            )));
        }
        let accept: f64 = rng.random();
        if accept * bound < lam {
            counts[grid.step_of(t)] += 1;
        }
    }
}

/// Initial states `xi^p ~ chi`, one independent stream per path.
pub fn sample_initial(law: &InitialLaw, n_paths: usize, seed: SeedRecord) -> Vec<f64> {
    (0..n_paths)
        .map(|p| {
            let mut rng = stream(seed.master, seed.key(Purpose::Initial, p));
            law.sample(&mut rng)
        })
        .collect()
}
