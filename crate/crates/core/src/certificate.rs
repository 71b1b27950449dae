//! Sufficient condition for `A*` to be the unique l1 minimizer.
//!
//! For coordinate `i` and a unit direction `y` define, per step,
//!
//! ```text
//! z_t^i(y) = |yᵀx_t|   if w_t^i = 0
//!          =  yᵀx_t    if w_t^i > 0
//!          = -yᵀx_t    if w_t^i < 0
//! ```
//!
//! If `Σ_t z_t^i(y) > 0` for every `y` on the unit sphere and every `i`, row
//! `i` of `A*` is the unique minimizer of its LAD problem. Positivity on the
//! whole sphere is checked on a finite net: `y ↦ Σ_t z_t^i(y)` is Lipschitz
//! with constant `Σ_t ‖x_t‖₂`, so a net minimum larger than
//! `radius · Σ_t ‖x_t‖₂` proves it everywhere.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm2, Vector};
use crate::seed::{rng_from_seed, Rng};

/// Largest admissible Lemma-style covering bound `(1 + 2/ε)^d`.
pub const NET_BUDGET: f64 = 1e7;

/// Unit-norm tolerance accepted by [`z_sum`].
const UNIT_TOL: f64 = 1e-9;

/// Sampled covering radius must sit this factor below the claimed one.
const FIBONACCI_SAFETY: f64 = 1.25;

/// Σ_t z_t^i(y) for coordinate `i` (zero-based).
pub fn z_sum(traj: &Trajectory, i: usize, y: &[f64]) -> Result<f64> {
    let d = traj.dim();
    if i >= d {
        return Err(invalid(format!("coordinate {i} out of range for d = {d}")));
    }
    if y.len() != d {
        return Err(invalid(format!("direction has length {}, expected {d}", y.len())));
    }
    let n = norm2(y);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(invalid(format!("direction is not unit length (norm {n})")));
    }
    Ok(traj.disturbances.iter().zip(&traj.states).map(|(w, x)| z_term(w[i], dot(y, x))).sum())
}

#[inline]
fn z_term(w: f64, proj: f64) -> f64 {
    if w == 0.0 {
        proj.abs()
    } else if w > 0.0 {
        proj
    } else {
        -proj
    }
}

/// A finite subset of the unit sphere in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub d: usize,
    /// Requested covering radius.
    pub epsilon: f64,
    /// Radius the construction guarantees (never above `epsilon`).
    pub covering_radius: f64,
    pub points: Vec<Vector>,
}

/// `(1 + 2/ε)^d`, the classical covering-number bound.
pub fn covering_bound(d: usize, epsilon: f64) -> f64 {
    (1.0 + 2.0 / epsilon).powi(d as i32)
}

/// Smallest `ε` whose covering bound fits the budget.
pub fn min_feasible_epsilon(d: usize) -> f64 {
    2.0 / (NET_BUDGET.powf(1.0 / d as f64) - 1.0) * (1.0 + 1e-12)
}

pub fn build_net(d: usize, epsilon: f64) -> Result<NetSpec> {
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid("epsilon must be positive"));
    }
    let bound = covering_bound(d, epsilon);
    if bound > NET_BUDGET {
        return Err(Error::NetTooLarge { bound, budget: NET_BUDGET });
    }
    match d {
        1 => Ok(NetSpec { d, epsilon, covering_radius: 0.0, points: vec![vec![1.0], vec![-1.0]] }),
        2 => {
            let spacing = 2.0 * (epsilon.min(2.0) / 2.0).asin();
            let n = ((2.0 * PI / spacing).ceil() as usize).max(3);
            let step = 2.0 * PI / n as f64;
            let points = (0..n).map(|k| {
                let a = k as f64 * step;
                vec![a.cos(), a.sin()]
            });
            // Any direction is within half a step of a grid point.
            let covering_radius = 2.0 * (step / 4.0).sin();
            Ok(NetSpec { d, epsilon, covering_radius, points: points.collect() })
        }
        3 => {
            let mut n = ((12.0 / (epsilon * epsilon)).ceil() as usize).max(12);
            for _ in 0..20 {
                let points = fibonacci_sphere(n);
                let sampled = sampled_covering_radius(&points, 20_000, 0x5EED);
                if sampled * FIBONACCI_SAFETY <= epsilon {
                    return Ok(NetSpec { d, epsilon, covering_radius: epsilon, points });
                }
                n = (n as f64 * 1.3).ceil() as usize;
            }
            Err(Error::NetTooLarge { bound, budget: NET_BUDGET })
        }
        _ => Err(invalid(format!("exact nets are built for d <= 3 only (d = {d}); use sampled mode"))),
    }
}

fn fibonacci_sphere(n: usize) -> Vec<Vector> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * k as f64;
            vec![r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

fn uniform_sphere(d: usize, rng: &mut Rng) -> Vector {
    loop {
        let v: Vector = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm2(&v);
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Largest nearest-net-point distance over random probes (and the poles).
/// Relies on the net being sorted by descending third coordinate.
fn sampled_covering_radius(points: &[Vector], probes: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let zs: Vec<f64> = points.iter().map(|p| p[2]).collect();
    let mut worst: f64 = 0.0;
    let mut queries: Vec<Vector> = vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0]];
    queries.extend((0..probes).map(|_| uniform_sphere(3, &mut rng)));
    for q in &queries {
        let mut best = f64::INFINITY;
        // Chord length is at least |Δz|: search outward from the matching z.
        let start = zs.partition_point(|&z| z > q[2]);
        let dist = |p: &Vector| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        for p in &points[start..] {
            if q[2] - p[2] > best {
                break;
            }
            best = best.min(dist(p));
        }
        for p in points[..start].iter().rev() {
            if p[2] - q[2] > best {
                break;
            }
            best = best.min(dist(p));
        }
        worst = worst.max(best);
    }
    worst
}

/// How directions are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CertifyMode {
    /// Covering net with Lipschitz slack; may certify.
    Exact,
    /// `n` uniformly random directions; evidence only, never certifies.
    Sampled { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub certified: bool,
    /// Minimum over the directions of `Σ_t z_t^i(y)`, per coordinate.
    pub per_coordinate_min: Vec<f64>,
    /// `Σ_t ‖x_t‖₂`.
    pub lipschitz_bound: f64,
    /// `min_i per_coordinate_min - covering_radius · lipschitz_bound`.
    pub margin: f64,
    /// Net parameters; absent in sampled mode.
    pub epsilon: Option<f64>,
    pub covering_radius: Option<f64>,
    pub directions: usize,
    pub mode: CertifyMode,
}

/// Per-coordinate minima of `Σ_t z_t^i(y)` over `dirs`.
fn minima_over(traj: &Trajectory, dirs: &[Vector]) -> Vec<f64> {
    let d = traj.dim();
    let horizon = traj.horizon();
    // sign class per (t, i): 0 quiet, 1 positive, -1 negative
    let classes: Vec<Vec<i8>> = traj
        .disturbances
        .iter()
        .map(|w| {
            w.iter()
                .map(|&v| {
                    if v == 0.0 {
                        0
                    } else if v > 0.0 {
                        1
                    } else {
                        -1
                    }
                })
                .collect()
        })
        .collect();
    let mut minima = vec![f64::INFINITY; d];
    let mut sums = vec![0.0; d];
    for y in dirs {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for t in 0..horizon {
            let proj = dot(y, &traj.states[t]);
            let abs = proj.abs();
            for (s, &c) in sums.iter_mut().zip(&classes[t]) {
                *s += match c {
                    0 => abs,
                    1 => proj,
                    _ => -proj,
                };
            }
        }
        for (m, s) in minima.iter_mut().zip(&sums) {
            *m = m.min(*s);
        }
    }
    minima
}

fn lipschitz(traj: &Trajectory) -> f64 {
    traj.states[..traj.horizon()].iter().map(|x| norm2(x)).sum()
}

fn report_on_net(traj: &Trajectory, net: &NetSpec) -> CertificateReport {
    let per_coordinate_min = minima_over(traj, &net.points);
    let lipschitz_bound = lipschitz(traj);
    let worst = per_coordinate_min.iter().copied().fold(f64::INFINITY, f64::min);
    let margin = worst - net.covering_radius * lipschitz_bound;
    CertificateReport {
        certified: margin > 0.0,
        per_coordinate_min,
        lipschitz_bound,
        margin,
        epsilon: Some(net.epsilon),
        covering_radius: Some(net.covering_radius),
        directions: net.points.len(),
        mode: CertifyMode::Exact,
    }
}

/// Checks the uniqueness condition on `traj`.
///
/// With `epsilon = None` the radius is chosen from the trajectory: a coarse
/// net gives the smallest sum `m`, then `ε = m / (2 Σ‖x_t‖)` (clamped to the
/// net budget), refined once more if that is not enough.
pub fn certify(traj: &Trajectory, epsilon: Option<f64>, mode: CertifyMode) -> Result<CertificateReport> {
    traj.validate()?;
    let d = traj.dim();
    match mode {
        CertifyMode::Sampled { n, seed } => {
            if n == 0 {
                return Err(invalid("sampled mode needs n >= 1"));
            }
            let mut rng = rng_from_seed(seed);
            let dirs: Vec<Vector> = (0..n).map(|_| uniform_sphere(d, &mut rng)).collect();
            let per_coordinate_min = minima_over(traj, &dirs);
            let margin = per_coordinate_min.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(CertificateReport {
                certified: false,
                per_coordinate_min,
                lipschitz_bound: lipschitz(traj),
                margin,
                epsilon: None,
                covering_radius: None,
                directions: n,
                mode,
            })
        }
        CertifyMode::Exact => {
            if let Some(eps) = epsilon {
                return Ok(report_on_net(traj, &build_net(d, eps)?));
            }
            let floor = min_feasible_epsilon(d);
            let coarse = report_on_net(traj, &build_net(d, 0.25f64.max(floor))?);
            if coarse.certified || d == 1 {
                return Ok(coarse);
            }
            let mut report = coarse;
            for _ in 0..2 {
                let m = report.per_coordinate_min.iter().copied().fold(f64::INFINITY, f64::min);
                if !(m > 0.0) || report.lipschitz_bound <= 0.0 {
                    break;
                }
                let eps = (0.5 * m / report.lipschitz_bound).clamp(floor, 0.25);
                if report.epsilon.is_some_and(|cur| eps >= cur) {
                    break;
                }
                report = report_on_net(traj, &build_net(d, eps)?);
                if report.certified {
                    break;
                }
            }
            Ok(report)
        }
    }
}
