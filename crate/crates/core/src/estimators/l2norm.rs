use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

use super::ols::weighted_normal_equations;
use super::{check_states, l2norm_loss, EstimatorResult, Method};

pub const L2_DEFAULT_TOL: f64 = 1e-8;

const MAX_ITERATIONS: usize = 500;
const WEIGHT_FLOOR: f64 = 1e-12;
const EPS_START: f64 = 1e-2;
const EPS_END: f64 = 1e-10;

pub fn fit_l2norm(traj: &Trajectory, tol: f64) -> Result<EstimatorResult> {
    fit_l2norm_states(&traj.states, tol)
}

/// IRLS on the smoothed loss `Σ sqrt(‖r_t‖² + ε²)`, with `ε` shrunk tenfold
/// per stage from `1e-2` to `1e-10` (relative to the RMS target norm).
pub fn fit_l2norm_states(states: &[Vector], tol: f64) -> Result<EstimatorResult> {
    check_states(states)?;
    let scale = {
        let ms: f64 =
            states[1..].iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / (states.len() - 1) as f64;
        if ms > 0.0 {
            ms.sqrt()
        } else {
            1.0
        }
    };
    let horizon = states.len() - 1;

    let mut a = weighted_normal_equations(states, |_| 1.0).map_err(excitation)?;
    let mut best = (l2norm_loss(&a, states), a.clone());
    let mut norms = vec![0.0; horizon];
    let mut iterations = 0;
    let mut converged = true;

    let mut eps = EPS_START;
    'stages: while eps >= EPS_END * 0.5 {
        let e2 = (eps * scale).powi(2);
        let last_stage = eps * 0.1 < EPS_END * 0.5;
        let mut prev = smoothed(&a, states, e2, &mut norms);
        let mut prev_change = f64::INFINITY;
        let mut stage_iterations = 0;
        loop {
            if iterations >= MAX_ITERATIONS {
                converged = false;
                break 'stages;
            }
            iterations += 1;
            stage_iterations += 1;
            let weights: Vec<f64> = norms.iter().map(|n| 1.0 / n.max(WEIGHT_FLOOR)).collect();
            let next = match weighted_normal_equations(states, |t| weights[t]) {
                Ok(m) => m,
                // Weights can underflow the Gram matrix once residuals vanish.
                Err(Error::DegenerateGram { .. }) => break,
                Err(e) => return Err(e),
            };
            let cur = smoothed(&next, states, e2, &mut norms);
            a = next;
            let loss = l2norm_loss(&a, states);
            if loss < best.0 {
                best = (loss, a.clone());
            }
            let change = (prev - cur).abs();
            let target = tol * (1.0 + cur);
            // Linear convergence: estimate the remaining decrease from the
            // contraction ratio of successive changes.
            let done = if last_stage {
                let ratio = (change / prev_change).clamp(0.0, 0.9999);
                stage_iterations >= 3 && change < target && change * ratio / (1.0 - ratio) < target
            } else {
                change < target
            };
            prev = cur;
            prev_change = change;
            if done {
                break;
            }
        }
        eps *= 0.1;
    }
    if let Some((loss, polished)) = polish_on_zero_set(&best.1, states, scale) {
        if loss < best.0 {
            best = (loss, polished);
        }
    }
    let (objective, a_hat) = best;
    Ok(EstimatorResult { a_hat, objective, method: Method::L2Norm, iterations, converged, tol, non_unique: false })
}

/// Refits by least squares on the transitions whose residual is already
/// negligible. When the minimizer interpolates those transitions, IRLS only
/// creeps towards it while this lands on it directly.
fn polish_on_zero_set(a: &Matrix, states: &[Vector], scale: f64) -> Option<(f64, Matrix)> {
    let d = a.rows();
    let mut zero_set: Vec<usize> = Vec::new();
    for (t, w) in states.windows(2).enumerate() {
        let ax = a.mul_vec(&w[0]);
        let r: f64 = ax.iter().zip(&w[1]).map(|(p, y)| (y - p) * (y - p)).sum::<f64>().sqrt();
        if r <= 1e-5 * scale {
            zero_set.push(t);
        }
    }
    if zero_set.len() < d {
        return None;
    }
    let mut mask = vec![0.0; states.len() - 1];
    for t in zero_set {
        mask[t] = 1.0;
    }
    let refit = weighted_normal_equations(states, |t| mask[t]).ok()?;
    Some((l2norm_loss(&refit, states), refit))
}

fn excitation(e: Error) -> Error {
    match e {
        Error::DegenerateGram { min_pivot } => {
            Error::InsufficientExcitation(format!("Gram matrix Σ x_t x_tᵀ is singular (min pivot {min_pivot:e})"))
        }
        other => other,
    }
}

/// Smoothed loss at `a`; fills `norms` with `sqrt(‖r_t‖² + ε²)`.
fn smoothed(a: &Matrix, states: &[Vector], e2: f64, norms: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (t, w) in states.windows(2).enumerate() {
        let ax = a.mul_vec(&w[0]);
        let r2: f64 = ax.iter().zip(&w[1]).map(|(p, y)| (y - p) * (y - p)).sum();
        let n = (r2 + e2).sqrt();
        norms[t] = n;
        total += n;
    }
    total
}
