use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{replication_inputs, run_system, MeasureSource, RunOptions};
use super::StrategyProfile;
use crate::error::Result;
use crate::measure::{fit_rate, mean_stderr, RateFit};
use crate::sde::{ModelSpec, SeedRecord, TimeGrid};

/// A named rule producing an `n`-player profile.
#[derive(Clone)]
pub struct ProfileFamily {
    pub label: String,
    build: Arc<dyn Fn(usize) -> Result<StrategyProfile> + Send + Sync>,
}

impl ProfileFamily {
    pub fn new(label: impl Into<String>, build: impl Fn(usize) -> Result<StrategyProfile> + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            build: Arc::new(build),
        }
    }

    pub fn profile(&self, n: usize) -> Result<StrategyProfile> {
        (self.build)(n)
    }
}

impl std::fmt::Debug for ProfileFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProfileFamily").field("label", &self.label).finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub family: String,
    pub n: usize,
    /// `E[sup_t |X^{i,n}_t|^2]`, averaged over players.
    pub sup_state_sq: f64,
    pub sup_state_sq_stderr: f64,
    /// `E[sup_t d_W(mu^n_t, delta_0)^2]`.
    pub sup_dw0_sq: f64,
    pub sup_dw0_sq_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    /// Per family: fits of both quantities against `n` (absent for
    /// identically zero estimates).
    pub fits: Vec<(String, Option<RateFit>, Option<RateFit>)>,
    pub band: f64,
    /// Families whose fitted slope leaves `[-band, band]`.
    pub flagged: Vec<String>,
}

impl MomentReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

/// Estimates the two second-moment quantities for every `(family, n)` and
/// flags growth in `n`: a family is flagged if the log-log slope of either
/// quantity leaves `[-0.05, 0.05]`.
pub fn moment_bound_check(
    spec: &ModelSpec,
    families: &[ProfileFamily],
    grid: &TimeGrid,
    ladder: &[usize],
    reps: usize,
    seed: u64,
) -> Result<MomentReport> {
    let band = 0.05;
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut flagged = Vec::new();
    let opts = RunOptions {
        record_states: true,
        record_measures: true,
        ..Default::default()
    };
    for fam in families {
        let mut fam_rows = Vec::new();
        for &n in ladder {
            let profile = fam.profile(n)?;
            let per_rep = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let s = SeedRecord::new(seed, n as u64, r as u64);
                    let (xi, noise) = replication_inputs(spec, grid, n, s)?;
                    let run = run_system(spec, &profile, grid, &xi, &noise, MeasureSource::Empirical, &opts)?;
                    let mut sup_x = vec![0.0f64; n];
                    let mut sup_m = 0.0f64;
                    for k in 0..=grid.steps() {
                        for (s, x) in sup_x.iter_mut().zip(run.layer(k)) {
                            *s = s.max(x * x);
                        }
                        sup_m = sup_m.max(run.measures[k].second_moment());
                    }
                    Ok((sup_x.iter().sum::<f64>() / n as f64, sup_m))
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            let xs: Vec<f64> = per_rep.iter().map(|p| p.0).collect();
            let ms: Vec<f64> = per_rep.iter().map(|p| p.1).collect();
            let (a, sa) = mean_stderr(&xs);
            let (b, sb) = mean_stderr(&ms);
            fam_rows.push(MomentRow {
                family: fam.label.clone(),
                n,
                sup_state_sq: a,
                sup_state_sq_stderr: sa,
                sup_dw0_sq: b,
                sup_dw0_sq_stderr: sb,
            });
        }
        let ns: Vec<f64> = fam_rows.iter().map(|r| r.n as f64).collect();
        let fx = fit_rate(&ns, &fam_rows.iter().map(|r| r.sup_state_sq).collect::<Vec<_>>()).ok();
        let fm = fit_rate(&ns, &fam_rows.iter().map(|r| r.sup_dw0_sq).collect::<Vec<_>>()).ok();
        let out_of_band = |f: &Option<RateFit>| f.as_ref().is_some_and(|f| f.slope.abs() > band);
        if out_of_band(&fx) || out_of_band(&fm) {
            flagged.push(fam.label.clone());
        }
        fits.push((fam.label.clone(), fx, fm));
        rows.extend(fam_rows);
    }
    Ok(MomentReport {
        rows,
        fits,
        band,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Strategy;
    use crate::sde::InitialLaw;

    #[test]
    fn frozen_moments_equal_c_squared() {
        let spec = ModelSpec::builder("frozen").initial(InitialLaw::Dirac(1.5), 6.0).build().unwrap();
        let g = TimeGrid::new(1.0, 10).unwrap();
        let fam = ProfileFamily::new("constant", |n| StrategyProfile::uniform(Strategy::Constant(0.5), n));
        let r = moment_bound_check(&spec, &[fam], &g, &[2, 4, 8], 5, 1).unwrap();
        for row in &r.rows {
            assert_eq!(row.sup_state_sq, 2.25);
            assert_eq!(row.sup_dw0_sq, 2.25);
        }
        assert!(r.passed());
        assert!(r.fits[0].1.as_ref().unwrap().slope.abs() < 1e-12);
    }
}
