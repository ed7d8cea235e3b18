use rayon::prelude::*;

use super::policy::{FeedbackPolicy, SpaceGrid, ValueGrid};
use crate::error::{Error, Result};
use crate::measure::MeasureFlow;
use crate::sde::ModelSpec;

/// Largest admissible `sigma^2 dt / dx^2`.
pub const DIFFUSION_CFL: f64 = 0.5;
/// Largest admissible `lambda dt`.
pub const JUMP_PROBABILITY_CAP: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct HjbSolution {
    pub value: ValueGrid,
    pub policy: FeedbackPolicy,
    /// Lattice nodes whose optimal jump target fell outside the space box.
    pub clamped_jumps: u64,
}

/// Weights of the three-point approximation of `E[v(x + d dt + sigma dW)]`
/// at a node: `(w_minus, w_zero, w_plus)`.
///
/// Central differences are used while they keep all weights nonnegative,
/// upwind differences for the drift otherwise.
#[inline]
fn three_point(drift: f64, sigma2: f64, dt: f64, dx: f64) -> (f64, f64, f64) {
    let d = 0.5 * sigma2 * dt / (dx * dx);
    let c = 0.5 * drift * dt / dx;
    let (wm, wp) = if d >= c.abs() {
        (d - c, d + c)
    } else {
        let u = drift * dt / dx;
        (d + (-u).max(0.0), d + u.max(0.0))
    };
    (wm, 1.0 - wm - wp, wp)
}

#[inline]
fn apply(v: &[f64], j: usize, w: (f64, f64, f64)) -> f64 {
    let last = v.len() - 1;
    let left = v[j.saturating_sub(1)];
    let right = v[(j + 1).min(last)];
    w.0 * left + w.1 * v[j] + w.2 * right
}

/// Backward dynamic programming for the best response to `flow`.
///
/// On each layer the value at `(t_k, x_j)` is the minimum over the action
/// grid of
///
/// `f dt + (1 - lambda dt) T[v_{k+1}](x_j; b - beta lambda) + lambda dt I[T_b v_{k+1}](x_j + beta)`,
///
/// where `T[.](x; d)` is the monotone three-point diffusion-advection step
/// with drift `d`, `T_b` uses the uncompensated drift `b`, and `I` is linear
/// interpolation clamped to the box. Ghost nodes copy the boundary value.
/// Ties go to the smallest action.
pub fn solve_hjb(spec: &ModelSpec, flow: &MeasureFlow, space: &SpaceGrid, action_points: usize) -> Result<HjbSolution> {
    let time = flow.grid().clone();
    let steps = time.steps();
    let dt = time.dt();
    let dx = space.dx();
    let jn = space.len();
    let xs = space.nodes();
    let acts = spec.actions().grid(action_points);
    let mut values = vec![0.0; (steps + 1) * jn];
    let mut table = vec![0.0; (steps + 1) * jn];
    let mu_t = flow.at(steps);
    for j in 0..jn {
        values[steps * jn + j] = spec.terminal_cost(xs[j], mu_t);
    }
    let mut clamped_jumps = 0u64;

    for k in (0..steps).rev() {
        let t = time.node(k);
        let mu = flow.at(k);
        let lam = spec.intensity(t);
        let p = lam * dt;
        if p > JUMP_PROBABILITY_CAP * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "lambda dt = {p} exceeds {JUMP_PROBABILITY_CAP} at t = {t}"
            )));
        }
        let (done, rest) = values.split_at_mut((k + 1) * jn);
        let next = &rest[..jn];
        let layer = &mut done[k * jn..];

        let sig2: Vec<f64> = xs.iter().map(|&x| spec.volatility(t, x).powi(2)).collect();
        let drift: Vec<f64> = xs.iter().map(|&x| spec.drift(t, x, mu)).collect();
        for (j, s2) in sig2.iter().enumerate() {
            let ratio = s2 * dt / (dx * dx);
            if ratio > DIFFUSION_CFL * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "CFL ratio sigma^2 dt / dx^2 = {ratio} exceeds {DIFFUSION_CFL} at t = {t}, x = {}",
                    xs[j]
                )));
            }
        }
        let betas: Vec<f64> = acts.iter().map(|&a| spec.jump_size(mu, a)).collect();
        // jump branch: land at x + beta, then diffuse with drift b
        let after_jump: Vec<f64> = if p > 0.0 {
            (0..jn).map(|j| apply(next, j, three_point(drift[j], sig2[j], dt, dx))).collect()
        } else {
            Vec::new()
        };

        let rows: Vec<Result<(f64, f64, bool)>> = (0..jn)
            .into_par_iter()
            .map(|j| {
                let x = xs[j];
                let mut best = f64::INFINITY;
                let mut arg = acts[0];
                let mut out = false;
                for (ai, &a) in acts.iter().enumerate() {
                    let beta = betas[ai];
                    let w = three_point(drift[j] - beta * lam, sig2[j], dt, dx);
                    if w.1 < -1e-12 {
                        return Err(Error::Config(format!(
                            "explicit step is not monotone at t = {t}, x = {x}: \
                             (sigma^2/dx^2 + |drift|/dx) dt = {}",
                            1.0 - w.1
                        )));
                    }
                    let mut q = spec.running_cost(t, x, mu, a) * dt + (1.0 - p) * apply(next, j, w);
                    let mut leaves = false;
                    if p > 0.0 {
                        let target = x + beta;
                        leaves = !space.contains(target);
                        let (i, s) = space.locate(target);
                        q += p * ((1.0 - s) * after_jump[i] + s * after_jump[i + 1]);
                    }
                    if q < best {
                        best = q;
                        arg = a;
                        out = leaves;
                    }
                }
                Ok((best, arg, out))
            })
            .collect();
        for (j, r) in rows.into_iter().enumerate() {
            let (v, a, out) = r?;
            layer[j] = v;
            table[k * jn + j] = a;
            clamped_jumps += out as u64;
        }
    }
    let (head, tail) = table.split_at_mut(steps * jn);
    tail.copy_from_slice(&head[(steps - 1) * jn..]);

    let policy = FeedbackPolicy::new(time.clone(), space.clone(), table, *spec.actions())?;
    Ok(HjbSolution {
        value: ValueGrid {
            time,
            space: space.clone(),
            values,
        },
        policy,
        clamped_jumps,
    })
}
