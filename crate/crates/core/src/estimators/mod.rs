//! The three competing estimators of `A*`.
//!
//! * [`fit_ols`]: least squares, `min Σ ‖x_{t+1} - A x_t‖₂²`.
//! * [`fit_l2norm`]: sum of unsquared residual norms, `min Σ ‖x_{t+1} - A x_t‖₂`.
//! * [`fit_l1`]: sum of l1 residual norms, `min Σ ‖x_{t+1} - A x_t‖₁`, solved
//!   exactly one row at a time with [`lad_row`].

mod l2norm;
mod lad;
mod ols;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{Matrix, Vector};

pub use l2norm::{fit_l2norm, fit_l2norm_states, L2_DEFAULT_TOL};
pub use lad::{fit_l1, fit_l1_states, lad_row, lad_row_warm, LadFit, LAD_DEFAULT_TOL};
pub use ols::{fit_ols, fit_ols_states};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "OLS", alias = "ols")]
    Ols,
    #[serde(rename = "L2Norm", alias = "l2norm", alias = "l2")]
    L2Norm,
    #[serde(rename = "L1Norm", alias = "l1norm", alias = "l1")]
    L1Norm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ols, Method::L2Norm, Method::L1Norm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ols => "OLS",
            Method::L2Norm => "L2Norm",
            Method::L1Norm => "L1Norm",
        }
    }

    /// The loss this estimator minimizes, evaluated at `a`.
    pub fn loss(self, a: &Matrix, states: &[Vector]) -> f64 {
        match self {
            Method::Ols => squared_loss(a, states),
            Method::L2Norm => l2norm_loss(a, states),
            Method::L1Norm => l1_loss(a, states),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fitted matrix with its loss and solver metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub a_hat: Matrix,
    pub objective: f64,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
    /// Set by the l1 estimator when some row's optimum is not a unique vertex.
    #[serde(default)]
    pub non_unique: bool,
}

fn residuals<'a>(a: &Matrix, states: &'a [Vector]) -> impl Iterator<Item = Vector> + 'a {
    let a = a.clone();
    states.windows(2).map(move |w| {
        let mut r = a.mul_vec(&w[0]);
        for (ri, next) in r.iter_mut().zip(&w[1]) {
            *ri = next - *ri;
        }
        r
    })
}

pub fn squared_loss(a: &Matrix, states: &[Vector]) -> f64 {
    residuals(a, states).map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum()
}

pub fn l2norm_loss(a: &Matrix, states: &[Vector]) -> f64 {
    residuals(a, states).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).sum()
}

pub fn l1_loss(a: &Matrix, states: &[Vector]) -> f64 {
    residuals(a, states).map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).sum()
}

/// Runs `method` with its default tolerance.
pub fn fit(method: Method, states: &[Vector]) -> Result<EstimatorResult> {
    match method {
        Method::Ols => fit_ols_states(states),
        Method::L2Norm => fit_l2norm_states(states, L2_DEFAULT_TOL),
        Method::L1Norm => fit_l1_states(states, LAD_DEFAULT_TOL, None).map(|(r, _)| r),
    }
}

pub(crate) fn check_states(states: &[Vector]) -> Result<usize> {
    let d = states.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(invalid("empty trajectory"));
    }
    let horizon = states.len() - 1;
    if horizon < d {
        return Err(invalid(format!("need T >= d transitions, have T = {horizon}, d = {d}")));
    }
    Ok(d)
}
