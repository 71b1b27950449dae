use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix, Vector};

use super::{check_states, squared_loss, EstimatorResult, Method};

pub fn fit_ols(traj: &Trajectory) -> Result<EstimatorResult> {
    fit_ols_states(&traj.states)
}

/// `Â = (Σ x_{t+1} x_tᵀ)(Σ x_t x_tᵀ)⁻¹` through a Cholesky solve.
pub fn fit_ols_states(states: &[Vector]) -> Result<EstimatorResult> {
    check_states(states)?;
    let a_hat = weighted_normal_equations(states, |_| 1.0).map_err(|e| match e {
        Error::DegenerateGram { min_pivot } => {
            Error::InsufficientExcitation(format!("Gram matrix Σ x_t x_tᵀ is singular (min pivot {min_pivot:e})"))
        }
        other => other,
    })?;
    let objective = squared_loss(&a_hat, states);
    Ok(EstimatorResult {
        a_hat,
        objective,
        method: Method::Ols,
        iterations: 1,
        converged: true,
        tol: 0.0,
        non_unique: false,
    })
}

/// Solves `Âᵀ = (Σ ω_t x_t x_tᵀ)⁻¹ (Σ ω_t x_t x_{t+1}ᵀ)`.
pub(crate) fn weighted_normal_equations(states: &[Vector], weight: impl Fn(usize) -> f64) -> Result<Matrix> {
    let d = states[0].len();
    let mut gram = Matrix::zeros(d, d);
    let mut cross = Matrix::zeros(d, d);
    for (t, w) in states.windows(2).enumerate() {
        let om = weight(t);
        let (x, y) = (&w[0], &w[1]);
        for r in 0..d {
            let xr = om * x[r];
            if xr == 0.0 {
                continue;
            }
            let grow = gram.row_mut(r);
            for c in r..d {
                grow[c] += xr * x[c];
            }
            let crow = cross.row_mut(r);
            for (c, yc) in crow.iter_mut().zip(y) {
                *c += xr * yc;
            }
        }
    }
    for r in 0..d {
        for c in 0..r {
            gram[(r, c)] = gram[(c, r)];
        }
    }
    Ok(solve_spd(&gram, &cross)?.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturbances::zero_model;
    use crate::dynamics::{random_system, simulate};
    use crate::linalg::frobenius_distance;

    fn scalar_states(xs: &[f64]) -> Vec<Vector> {
        xs.iter().map(|v| vec![*v]).collect()
    }

    #[test]
    fn outlier_drags_scalar_estimate() {
        let r = fit_ols_states(&scalar_states(&[1.0, 0.5, 0.25, 10.25])).unwrap();
        let expected = (0.5 + 0.125 + 0.25 * 10.25) / (1.0 + 0.25 + 0.0625);
        assert!((r.a_hat[(0, 0)] - expected).abs() < 1e-14);
        assert!(r.a_hat[(0, 0)] > 2.0);
    }

    #[test]
    fn noise_free_is_exact() {
        let spec = random_system(5, 0.8, 2).unwrap();
        let traj = simulate(&spec, &zero_model(), 12, 0).unwrap();
        let r = fit_ols(&traj).unwrap();
        assert!(frobenius_distance(&r.a_hat, &spec.a_star).unwrap() < 1e-9);
        assert!(r.converged);
    }

    #[test]
    fn singular_gram_is_insufficient_excitation() {
        let states = vec![vec![1.0, 0.0], vec![0.5, 0.0], vec![0.25, 0.0]];
        assert!(matches!(fit_ols_states(&states), Err(Error::InsufficientExcitation(_))));
        assert!(fit_ols_states(&states[..2]).is_err());
    }
}
