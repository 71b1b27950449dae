//! Identification of linear dynamics `x_{t+1} = A* x_t + w_t` when the
//! disturbances `w_t` are adversarial, intermittent and nonzero-mean.
//!
//! The crate simulates such systems, fits `A*` with ordinary least squares,
//! the sum-of-l2-norms estimator and the l1 estimator, checks a sufficient
//! condition for the l1 estimator to recover `A*` exactly, and runs the
//! Monte-Carlo experiments that compare the three.

pub mod certificate;
pub mod disturbances;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod seed;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
