//! One-dimensional empirical measures, the order-2 Wasserstein distance and
//! log-log rate fitting.

mod rate;
mod wasserstein;

pub use rate::{fit_rate, fit_rate_guarded, iid_rate_experiment, write_rate_csv, IidRateReport, RateFit, RateRow};
pub(crate) use rate::mean_stderr;
pub use wasserstein::{wasserstein2, wasserstein2_squared, QuantileTable};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::TimeGrid;

/// Uniform atomic measure `(1/n) sum delta_{x_i}` stored as sorted atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
    mean: f64,
    second_moment: f64,
}

/// Empirical measure of `samples`. Input order is irrelevant.
pub fn empirical(samples: &[f64]) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::from_unsorted(samples.to_vec())
}

impl EmpiricalMeasure {
    /// Takes ownership of `atoms` and sorts them.
    pub fn from_unsorted(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("empirical measure needs at least one atom".into()));
        }
        if let Some(bad) = atoms.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite atom {bad}")));
        }
        atoms.sort_unstable_by(f64::total_cmp);
        Ok(Self::from_sorted_unchecked(atoms))
    }

    /// Atoms must already be finite and ascending.
    pub fn from_sorted(atoms: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("empirical measure needs at least one atom".into()));
        }
        if atoms.iter().any(|x| !x.is_finite()) || atoms.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("atoms are not finite and ascending".into()));
        }
        Ok(Self::from_sorted_unchecked(atoms))
    }

    pub(crate) fn from_sorted_unchecked(atoms: Vec<f64>) -> Self {
        let n = atoms.len() as f64;
        let mean = atoms.iter().sum::<f64>() / n;
        let second_moment = atoms.iter().map(|x| x * x).sum::<f64>() / n;
        Self {
            atoms,
            mean,
            second_moment,
        }
    }

    pub fn dirac(x: f64) -> Self {
        Self::from_sorted_unchecked(vec![x])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn variance(&self) -> f64 {
        (self.second_moment - self.mean * self.mean).max(0.0)
    }

    /// Left-continuous quantile function at `u` in `(0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.atoms.len();
        let i = ((u * n as f64).ceil() as usize).clamp(1, n);
        self.atoms[i - 1]
    }

    pub fn min(&self) -> f64 {
        self.atoms[0]
    }

    pub fn max(&self) -> f64 {
        self.atoms[self.atoms.len() - 1]
    }
}

/// `(1/n) sum |x_i|^q`.
pub fn moment_q(mu: &EmpiricalMeasure, q: f64) -> f64 {
    if q == 2.0 {
        return mu.second_moment();
    }
    mu.atoms().iter().map(|x| x.abs().powf(q)).sum::<f64>() / mu.len() as f64
}

/// `d_W(mu, delta_0) = sqrt(M_2(mu))`.
pub fn dw_to_dirac0(mu: &EmpiricalMeasure) -> f64 {
    mu.second_moment().sqrt()
}

/// One empirical measure per node of a time grid, all with the same atom count.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureFlow {
    grid: TimeGrid,
    measures: Vec<EmpiricalMeasure>,
}

impl MeasureFlow {
    pub fn new(grid: TimeGrid, measures: Vec<EmpiricalMeasure>) -> Result<Self> {
        if measures.len() != grid.steps() + 1 {
            return Err(Error::InvalidArgument(format!(
                "flow has {} measures for a grid of {} nodes",
                measures.len(),
                grid.steps() + 1
            )));
        }
        let m = measures[0].len();
        if measures.iter().any(|mu| mu.len() != m) {
            return Err(Error::InvalidArgument("flow measures have different atom counts".into()));
        }
        Ok(Self { grid, measures })
    }

    /// The same measure at every node.
    pub fn constant(grid: TimeGrid, mu: EmpiricalMeasure) -> Self {
        let measures = vec![mu; grid.steps() + 1];
        Self { grid, measures }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn at(&self, k: usize) -> &EmpiricalMeasure {
        &self.measures[k]
    }

    pub fn measures(&self) -> &[EmpiricalMeasure] {
        &self.measures
    }

    pub fn atoms_per_node(&self) -> usize {
        self.measures[0].len()
    }

    /// `max_k d_W(self_k, other_k)`.
    pub fn sup_distance(&self, other: &MeasureFlow) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::InvalidArgument("flows live on different grids".into()));
        }
        Ok(self
            .measures
            .iter()
            .zip(&other.measures)
            .map(|(a, b)| wasserstein2(a, b))
            .fold(0.0, f64::max))
    }

    pub fn into_measures(self) -> Vec<EmpiricalMeasure> {
        self.measures
    }
}
