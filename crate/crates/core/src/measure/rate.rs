use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EmpiricalMeasure, QuantileTable};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose, StreamKey};
use crate::sde::sampling_exponent;

/// Least-squares fit of `log y = intercept + slope * log n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub n: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the log residuals.
    pub residual: f64,
    /// Rung dropped by the pre-asymptotic guard, if any.
    pub excluded: Option<f64>,
}

impl RateFit {
    pub fn predict(&self, n: f64) -> f64 {
        (self.intercept + self.slope * n.ln()).exp()
    }
}

/// Log-log least squares over at least three points with strictly
/// increasing `n` and positive `y`.
pub fn fit_rate(n: &[f64], y: &[f64]) -> Result<RateFit> {
    if n.len() != y.len() {
        return Err(Error::InvalidArgument(format!("{} n values but {} y values", n.len(), y.len())));
    }
    if n.len() < 3 {
        return Err(Error::Data(format!("rate fit needs at least 3 points, got {}", n.len())));
    }
    if n.iter().any(|v| !(v.is_finite() && *v > 0.0)) || n.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Data("n values must be positive and strictly increasing".into()));
    }
    if let Some(bad) = y.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Data(format!("rate fit needs positive values, got {bad}")));
    }
    let lx: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(RateFit {
        n: n.to_vec(),
        y: y.to_vec(),
        slope,
        intercept,
        residual: (ss / k).sqrt(),
        excluded: None,
    })
}

/// [`fit_rate`] with a pre-asymptotic guard: with four or more points, the
/// smallest rung is dropped when its absolute log residual exceeds twice the
/// mean absolute residual of the other rungs.
pub fn fit_rate_guarded(n: &[f64], y: &[f64]) -> Result<RateFit> {
    let full = fit_rate(n, y)?;
    if n.len() < 4 {
        return Ok(full);
    }
    let res: Vec<f64> = n
        .iter()
        .zip(y)
        .map(|(a, b)| (b.ln() - full.intercept - full.slope * a.ln()).abs())
        .collect();
    let others = res[1..].iter().sum::<f64>() / (res.len() - 1) as f64;
    if res[0] > 2.0 * others {
        let mut fit = fit_rate(&n[1..], &y[1..])?;
        fit.excluded = Some(n[0]);
        return Ok(fit);
    }
    Ok(full)
}

/// Mean squared distance at one ladder rung.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub mean_sq_distance: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidRateReport {
    pub rows: Vec<RateRow>,
    /// `None` when the distances carry no signal (see `diagnostic`).
    pub fit: Option<RateFit>,
    pub alpha: f64,
    pub theoretical_slope: f64,
    pub reference_size: usize,
    /// Size of the bias from replacing the law by the reference sample,
    /// `reference_size^{-1/2}`.
    pub reference_bias: f64,
    pub diagnostic: Option<String>,
}

/// Estimates `E[d_W(mu, mu^n)^2]` for i.i.d. samples of size `n` and fits
/// the decay exponent over the ladder.
///
/// The law `mu` is represented by one reference sample of size
/// `100 * max n`. Replications run in parallel on independent streams.
pub fn iid_rate_experiment<S>(sampler: S, q: f64, ladder: &[usize], reps: usize, seed: u64) -> Result<IidRateReport>
where
    S: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    if ladder.len() < 4 || ladder.windows(2).any(|w| w[0] >= w[1]) || ladder[0] == 0 {
        return Err(Error::InvalidArgument("ladder needs at least 4 increasing positive rungs".into()));
    }
    if reps < 50 {
        return Err(Error::InvalidArgument(format!("at least 50 replications required, got {reps}")));
    }
    let max_n = *ladder.last().unwrap();
    let reference_size = 100 * max_n;
    let mut rng = stream(seed, StreamKey::new(Purpose::Reference, 0, 0, 0));
    let reference: Vec<f64> = (0..reference_size).map(|_| sampler(&mut rng)).collect();
    if reference.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("sampler produced a non-finite value".into()));
    }
    let table = QuantileTable::new(&EmpiricalMeasure::from_unsorted(reference)?);

    let mut rows = Vec::with_capacity(ladder.len());
    for &n in ladder {
        let values: Vec<Result<f64>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, StreamKey::new(Purpose::Sampling, n as u64, r as u64, 0));
                let xs: Vec<f64> = (0..n).map(|_| sampler(&mut rng)).collect();
                if xs.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Data("sampler produced a non-finite value".into()));
                }
                Ok(table.distance_squared(&EmpiricalMeasure::from_unsorted(xs)?))
            })
            .collect();
        let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
        let (mean, stderr) = mean_stderr(&values);
        rows.push(RateRow {
            n,
            mean_sq_distance: mean,
            stderr,
        });
    }

    let alpha = sampling_exponent(q);
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_sq_distance).collect();
    let (fit, diagnostic) = if ys.iter().all(|&y| y <= 1e-300) {
        (None, Some("zero variance: every distance is 0, the law is degenerate".to_string()))
    } else {
        match fit_rate(&ns, &ys) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    Ok(IidRateReport {
        rows,
        fit,
        alpha,
        theoretical_slope: -alpha,
        reference_size,
        reference_bias: (reference_size as f64).powf(-0.5),
        diagnostic,
    })
}

/// Sample mean and standard error `sd / sqrt(k)`.
pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// CSV with header `n,mean_sq_distance,stderr`.
pub fn write_rate_csv<W: Write>(rows: &[RateRow], mut out: W) -> Result<()> {
    writeln!(out, "n,mean_sq_distance,stderr")?;
    for r in rows {
        writeln!(out, "{},{:e},{:e}", r.n, r.mean_sq_distance, r.stderr)?;
    }
    Ok(())
}
